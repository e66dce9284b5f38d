#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "swin/gradcheck.h"
#include "swin/ops.h"
#include "swin/optim.h"

using namespace swin;

TEST_CASE("backward of sum gives all-ones grad") {
  auto p = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6}).set_requires_grad(true);
  backward(sum_all(p));
  CHECK(p.grad() == std::vector<double>(6, 1.0));
}

TEST_CASE("backward of sum(p*p) gives 2p") {
  auto p = Tensor<double>::from_data({4}, {1, -2, 3, 0.5}).set_requires_grad(true);
  backward(sum_all(mul(p, p)));
  CHECK(p.grad() == std::vector<double>{2, -4, 6, 1});
}

TEST_CASE("grads accumulate across backward calls until cleared") {
  auto p = Tensor<double>::from_data({2}, {1, 1}).set_requires_grad(true);
  backward(sum_all(p));
  backward(sum_all(p));
  CHECK(p.grad() == std::vector<double>{2, 2});
  p.zero_grad();
  backward(sum_all(p));
  CHECK(p.grad() == std::vector<double>{1, 1});
}

TEST_CASE("backward rejects non-scalar loss and untracked graphs") {
  auto p = Tensor<double>::zeros({3}).set_requires_grad(true);
  CHECK_THROWS_AS(backward(add_scalar(p, 1.0)), ShapeError);
  auto q = Tensor<double>::zeros({1});  // requires_grad false
  CHECK_THROWS_AS(backward(q), NumericError);
}

TEST_CASE("NoGradGuard suppresses graph recording") {
  auto p = Tensor<double>::from_data({2}, {1, 2}).set_requires_grad(true);
  Tensor<double> y;
  {
    NoGradGuard ng;
    y = sum_all(mul(p, p));
  }
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("finite_diff_check on trivial functions") {
  auto val = Tensor<double>::from_data({3}, {0.3, -1.2, 2.0});
  Parameter<double> p{"p", val, true};

  auto f_sum = [&]() { return sum_all(p.value); };
  CHECK(finite_diff_check<double>(f_sum, {&p}, 1e-5) <= 1e-9);

  auto f_gelu = [&]() { return sum_all(gelu(p.value)); };
  CHECK(finite_diff_check<double>(f_gelu, {&p}, 1e-5) <= 1e-6);
}

TEST_CASE("finite_diff_check flags a non-deterministic function") {
  auto val = Tensor<double>::from_data({1}, {1.0});
  Parameter<double> p{"p", val, true};
  int calls = 0;
  auto f = [&]() {
    ++calls;
    return add_scalar(sum_all(p.value), static_cast<double>(calls));
  };
  CHECK_THROWS_AS(finite_diff_check<double>(f, {&p}, 1e-5), NumericError);
}

// One composite function touching every differentiable op; checked against
// central differences across many seeds.
TEST_CASE("every op passes a finite-difference sweep over 100 seeds") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    Parameter<double> x{"x", Tensor<double>::randn({4, 6, 2}, rng), true};
    Parameter<double> w{"w", Tensor<double>::randn({3, 2}, rng, 0.5), true};
    Parameter<double> g{"g", Tensor<double>::randn({3}, rng, 0.2), true};
    Parameter<double> b{"b", Tensor<double>::randn({3}, rng, 0.2), true};

    auto f = [&]() {
      auto h = linear(x.value, w.value, b.value);        // [4,6,3]
      h = gelu(h);
      h = layer_norm(h, add_scalar(g.value, 1.0), b.value);
      h = roll2d(h, -1, 2);
      h = add(h, mul(h, h));
      h = softmax(h, 2);
      h = permute(h, {2, 0, 1});                         // [3,4,6]
      h = reshape(h, {3, 24});
      h = index_select_rows(reshape(h, {-1, 4}), {0, 2, 5, 2, -1});
      h = gather_last(h, {1, 3, 0});
      h = slice_axis(h, 0, 1, 3);
      auto pooled = mean_rows(h);                        // [1,3]
      auto ce = cross_entropy(pooled, {1});
      auto padded = pad_hw(reshape(h, {3, 3, 1}), 4, 4);
      return add(ce, mul_scalar(sum_all(crop_hw(padded, 2, 2)), 0.01));
    };
    worst = std::max(worst, finite_diff_check<double>(f, {&x, &w, &g, &b}, 1e-5));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("matmul gradients cover plain, transposed and shared-operand forms") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Parameter<double> a{"a", Tensor<double>::randn({2, 3, 4}, rng), true};
    Parameter<double> b{"b", Tensor<double>::randn({2, 4, 5}, rng), true};
    Parameter<double> w{"w", Tensor<double>::randn({5, 4}, rng), true};
    auto f = [&]() {
      auto nn = matmul(a.value, b.value);                        // batched plain
      auto nt = matmul(a.value, w.value, /*transpose_b=*/true);  // shared rank-2, transposed
      return add(sum_all(nn), sum_all(mul(nt, nt)));
    };
    worst = std::max(worst, finite_diff_check<double>(f, {&a, &b, &w}, 1e-5));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("adamw: zero gradient leaves only decoupled decay") {
  auto val = Tensor<double>::from_data({3}, {1.0, -2.0, 0.5});
  Parameter<double> p{"p", val, true};
  p.value.node()->grad.assign(3, 0.0);
  AdamW<double>::Settings s;
  s.lr = 0.001;
  s.weight_decay = 0.05;
  AdamW<double> opt(s);
  opt.step({&p});
  CHECK(p.value.data()[0] == doctest::Approx(1.0 * (1 - 5e-5)).epsilon(1e-14));
  CHECK(p.value.data()[1] == doctest::Approx(-2.0 * (1 - 5e-5)).epsilon(1e-14));
  CHECK(p.value.data()[2] == doctest::Approx(0.5 * (1 - 5e-5)).epsilon(1e-14));
}

TEST_CASE("adamw: first step matches the scalar recurrence, wd=0") {
  const double g = 0.7, p0 = 2.0, lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  auto val = Tensor<double>::from_data({1}, {p0});
  Parameter<double> p{"p", val, true};
  p.value.node()->grad.assign(1, g);
  AdamW<double>::Settings s;
  s.lr = lr;
  s.beta1 = b1;
  s.beta2 = b2;
  s.eps = eps;
  s.weight_decay = 0.0;
  AdamW<double> opt(s);
  opt.step({&p});
  // Scalar oracle for t=1: mhat = g, vhat = g^2; update = lr*g/(|g|+eps).
  const double expect = p0 - lr * g / (std::abs(g) + eps);
  CHECK(p.value.data()[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adamw: identical parameters with identical gradients update identically") {
  auto mk = [] {
    auto val = Tensor<double>::from_data({2}, {0.4, -1.1});
    return val;
  };
  Parameter<double> p1{"p1", mk(), true};
  Parameter<double> p2{"p2", mk(), true};
  p1.value.node()->grad = {0.3, -0.2};
  p2.value.node()->grad = {0.3, -0.2};
  AdamW<double>::Settings s;
  s.lr = 0.01;
  s.weight_decay = 0.01;
  AdamW<double> opt(s);
  for (int i = 0; i < 5; ++i) opt.step({&p1, &p2});
  CHECK(p1.value.data() == p2.value.data());
}

TEST_CASE("adamw: missing gradient is a contract error naming the parameter") {
  auto val = Tensor<double>::zeros({2});
  Parameter<double> p{"blocks.0.qkv.weight", val, true};
  AdamW<double> opt({});
  CHECK_THROWS_WITH_AS(opt.step({&p}), doctest::Contains("blocks.0.qkv.weight"), NumericError);
}

TEST_CASE("adamw skips non-trainable parameters") {
  auto val = Tensor<double>::from_data({1}, {3.0});
  Parameter<double> p{"frozen", val, false};
  AdamW<double>::Settings s;
  s.weight_decay = 0.1;
  AdamW<double> opt(s);
  opt.step({&p});  // no gradient, but frozen: must not throw or move
  CHECK(p.value.data()[0] == 3.0);
}
