#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "swin/ops.h"

using namespace swin;

namespace {

// Independent scalar triple-loop product used to cross-check matmul.
std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                  int64_t m, int64_t k, int64_t n) {
  std::vector<double> c(m * n, 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul identity, zero and hand-evaluated cases") {
  auto I = Tensor<double>::from_data({2, 2}, {1, 0, 0, 1});
  auto A = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  auto IA = matmul(I, A);
  CHECK(IA.data() == std::vector<double>{1, 2, 3, 4});

  auto z = Tensor<double>::from_data({2, 1}, {0, 0});
  CHECK(matmul(I, z).data() == std::vector<double>{0, 0});

  auto v = Tensor<double>::from_data({2, 1}, {5, 6});
  auto Av = matmul(A, v);
  CHECK(Av.data() == std::vector<double>{17, 39});
}

TEST_CASE("matmul agrees with a scalar triple-loop oracle") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t m = 1 + static_cast<int64_t>(rng() % 6);
    const int64_t k = 1 + static_cast<int64_t>(rng() % 6);
    const int64_t n = 1 + static_cast<int64_t>(rng() % 6);
    auto a = Tensor<double>::randn({m, k}, rng);
    auto b = Tensor<double>::randn({k, n}, rng);
    auto c = matmul(a, b);
    auto ref = matmul_oracle(a.data(), b.data(), m, k, n);
    for (int64_t i = 0; i < m * n; ++i) CHECK(c.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul transpose_b and shared rank-2 operand") {
  std::mt19937_64 rng(7);
  auto a = Tensor<double>::randn({3, 4, 5}, rng);
  auto w = Tensor<double>::randn({6, 5}, rng);  // [out, in], as linear stores it
  auto y = matmul(a, w, /*transpose_b=*/true);
  REQUIRE(y.shape() == Shape{3, 4, 6});
  // Against an explicit transpose fed through the plain path.
  std::vector<double> wt(5 * 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j) wt[j * 6 + i] = w.data()[i * 5 + j];
  auto y2 = matmul(a, Tensor<double>::from_data({5, 6}, wt));
  for (int64_t i = 0; i < y.numel(); ++i)
    CHECK(y.data()[i] == doctest::Approx(y2.data()[i]).epsilon(1e-12));
}

TEST_CASE("matmul rejects mismatched shapes, naming both") {
  auto a = Tensor<float>::zeros({2, 3});
  auto b = Tensor<float>::zeros({4, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[4x2]"), ShapeError);
}

TEST_CASE("matmul reports multiply-accumulates to the active meter") {
  FlopsMeter meter;
  {
    MeterGuard guard(meter);
    auto a = Tensor<float>::zeros({2, 3, 4});
    auto b = Tensor<float>::zeros({2, 4, 5});
    matmul(a, b);
  }
  CHECK(meter.total_macs() == 2u * 3u * 5u * 4u);
}

TEST_CASE("softmax fixed points") {
  auto s1 = softmax(Tensor<double>::from_data({2}, {0, 0}), 0);
  CHECK(s1.data()[0] == doctest::Approx(0.5));
  CHECK(s1.data()[1] == doctest::Approx(0.5));

  // Max subtraction keeps huge but equal logits finite.
  auto s2 = softmax(Tensor<double>::from_data({2}, {1000, 1000}), 0);
  CHECK(s2.data()[0] == doctest::Approx(0.5));

  auto s3 = softmax(Tensor<double>::from_data({2}, {0.0, std::log(3.0)}), 0);
  CHECK(s3.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s3.data()[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one for magnitudes up to 1e4") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mag(-1e4, 1e4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> vals(24);
    for (auto& v : vals) v = mag(rng);
    auto p = softmax(Tensor<double>::from_data({4, 6}, vals), 1);
    for (int r = 0; r < 4; ++r) {
      double sum = 0;
      for (int c = 0; c < 6; ++c) sum += p.data()[r * 6 + c];
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    // Order preservation within each row.
    for (int r = 0; r < 4; ++r)
      for (int c1 = 0; c1 < 6; ++c1)
        for (int c2 = 0; c2 < 6; ++c2)
          if (vals[r * 6 + c1] < vals[r * 6 + c2])
            CHECK(p.data()[r * 6 + c1] <= p.data()[r * 6 + c2]);
  }
}

TEST_CASE("softmax over a non-trailing axis") {
  auto x = Tensor<double>::from_data({2, 2}, {0, 10, std::log(3.0), 10});
  auto p = softmax(x, 0);
  CHECK(p.data()[0] == doctest::Approx(0.25).epsilon(1e-12));  // column 0: [0, ln3]
  CHECK(p.data()[2] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(p.data()[1] == doctest::Approx(0.5));
}

TEST_CASE("layer_norm examples") {
  auto g1 = Tensor<double>::from_data({2}, {1, 1});
  auto b1 = Tensor<double>::from_data({2}, {0, 0});
  auto y = layer_norm(Tensor<double>::from_data({2}, {1, -1}), g1, b1);
  CHECK(y.data()[0] == doctest::Approx(0.99999).epsilon(1e-4));
  CHECK(y.data()[1] == doctest::Approx(-0.99999).epsilon(1e-4));

  auto yc = layer_norm(Tensor<double>::from_data({2}, {3.5, 3.5}), g1, b1);
  CHECK(yc.data()[0] == doctest::Approx(0.0));
  CHECK(yc.data()[1] == doctest::Approx(0.0));

  auto g3 = Tensor<double>::from_data({3}, {1, 1, 1});
  auto b3 = Tensor<double>::from_data({3}, {0, 0, 0});
  auto y3 = layer_norm(Tensor<double>::from_data({3}, {0, 2, 4}), g3, b3);
  // mean 2, population variance 8/3
  const double expect = 2.0 / std::sqrt(8.0 / 3.0 + 1e-5);
  CHECK(y3.data()[0] == doctest::Approx(-expect).epsilon(1e-12));
  CHECK(y3.data()[1] == doctest::Approx(0.0));
  CHECK(y3.data()[2] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(1.2247).epsilon(1e-4));
}

TEST_CASE("layer_norm output is normalized before affine") {
  std::mt19937_64 rng(3);
  auto x = Tensor<double>::randn({5, 8}, rng, 3.0);
  auto g = Tensor<double>::filled({8}, 1.0);
  auto b = Tensor<double>::zeros({8});
  auto y = layer_norm(x, g, b);
  for (int r = 0; r < 5; ++r) {
    double mean = 0, var = 0;
    for (int c = 0; c < 8; ++c) mean += y.data()[r * 8 + c];
    mean /= 8;
    for (int c = 0; c < 8; ++c) {
      const double d = y.data()[r * 8 + c] - mean;
      var += d * d;
    }
    var /= 8;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps shifts variance slightly below 1
  }
}

TEST_CASE("gelu exact-erf values") {
  auto y = gelu(Tensor<double>::from_data({3}, {0.0, 10.0, 1.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == doctest::Approx(10.0).epsilon(1e-10));
  CHECK(y.data()[2] == doctest::Approx(0.8413447460685429).epsilon(1e-12));
}

TEST_CASE("gelu is monotone right of its dip") {
  // x * Phi(x) decreases only on a short stretch left of x ~ -0.75.
  std::vector<double> xs(201);
  for (int i = 0; i <= 200; ++i) xs[i] = -0.7 + 0.05 * i;
  auto y = gelu(Tensor<double>::from_data({201}, xs));
  for (int i = 1; i <= 200; ++i) CHECK(y.data()[i] >= y.data()[i - 1]);
  auto dip = gelu(Tensor<double>::from_data({1}, {-0.7518}));
  CHECK(dip.data()[0] == doctest::Approx(-0.17).epsilon(0.01));
}

TEST_CASE("roll2d fixed cases") {
  std::mt19937_64 rng(5);
  auto x = Tensor<double>::randn({4, 5, 3}, rng);
  auto same = roll2d(x, 0, 0);
  CHECK(same.data() == x.data());

  auto m = Tensor<double>::from_data({2, 2, 1}, {1, 2, 3, 4});
  auto r = roll2d(m, -1, -1);
  CHECK(r.data() == std::vector<double>{4, 3, 2, 1});

  auto round_trip = roll2d(roll2d(x, -3, -3), 3, 3);
  CHECK(round_trip.data() == x.data());  // bit-exact bijection
}

TEST_CASE("roll2d index rule x'[i][j] = x[(i-dy) mod h][(j-dx) mod w]") {
  std::vector<double> vals(12);
  for (int i = 0; i < 12; ++i) vals[i] = i;
  auto x = Tensor<double>::from_data({3, 4, 1}, vals);
  for (int dy = -4; dy <= 4; ++dy)
    for (int dx = -5; dx <= 5; ++dx) {
      auto r = roll2d(x, dy, dx);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) {
          const int si = ((i - dy) % 3 + 3) % 3;
          const int sj = ((j - dx) % 4 + 4) % 4;
          CHECK(r.data()[i * 4 + j] == vals[si * 4 + sj]);
        }
    }
}

TEST_CASE("broadcast add and mul") {
  auto a = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto row = Tensor<double>::from_data({3}, {10, 20, 30});
  auto col = Tensor<double>::from_data({2, 1}, {100, 200});
  CHECK(add(a, row).data() == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(add(a, col).data() == std::vector<double>{101, 102, 103, 204, 205, 206});
  CHECK(mul(a, row).data() == std::vector<double>{10, 40, 90, 40, 100, 180});
  CHECK(sub(a, a).data() == std::vector<double>(6, 0.0));
  auto bad = Tensor<double>::zeros({4});
  CHECK_THROWS_AS(add(a, bad), ShapeError);
}

TEST_CASE("reshape, permute, slice") {
  auto a = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto r = reshape(a, {3, -1});
  REQUIRE(r.shape() == Shape{3, 2});
  CHECK(r.data() == a.data());
  CHECK_THROWS_AS(reshape(a, {4, 2}), ShapeError);

  auto p = permute(a, {1, 0});
  REQUIRE(p.shape() == Shape{3, 2});
  CHECK(p.data() == std::vector<double>{1, 4, 2, 5, 3, 6});

  auto s = slice_axis(a, 1, 1, 2);
  REQUIRE(s.shape() == Shape{2, 2});
  CHECK(s.data() == std::vector<double>{2, 3, 5, 6});

  // permute round trip on a rank-4 tensor
  std::mt19937_64 rng(9);
  auto t = Tensor<double>::randn({2, 3, 4, 5}, rng);
  auto back = permute(permute(t, {2, 0, 3, 1}), {1, 3, 0, 2});
  CHECK(back.data() == t.data());
}

TEST_CASE("pad_hw and crop_hw") {
  auto x = Tensor<double>::from_data({2, 2, 1}, {1, 2, 3, 4});
  auto p = pad_hw(x, 3, 4);
  REQUIRE(p.shape() == Shape{3, 4, 1});
  CHECK(p.data() == std::vector<double>{1, 2, 0, 0, 3, 4, 0, 0, 0, 0, 0, 0});
  auto c = crop_hw(p, 2, 2);
  CHECK(c.data() == x.data());
}

TEST_CASE("index_select_rows with -1 padding slots") {
  auto x = Tensor<double>::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  auto g = index_select_rows(x, {2, -1, 0});
  REQUIRE(g.shape() == Shape{3, 2});
  CHECK(g.data() == std::vector<double>{5, 6, 0, 0, 1, 2});
  CHECK_THROWS_AS(index_select_rows(x, {3}), ShapeError);
}

TEST_CASE("gather_last") {
  auto x = Tensor<double>::from_data({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto g = gather_last(x, {3, 0, 0});
  REQUIRE(g.shape() == Shape{2, 3});
  CHECK(g.data() == std::vector<double>{4, 1, 1, 8, 5, 5});
}

TEST_CASE("reductions") {
  auto a = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(sum_all(a).item() == 10.0);
  CHECK(mean_all(a).item() == 2.5);
  auto m = mean_rows(a);
  REQUIRE(m.shape() == Shape{1, 2});
  CHECK(m.data() == std::vector<double>{2, 3});
}

TEST_CASE("cross_entropy matches a hand computation") {
  auto logits = Tensor<double>::from_data({2, 2}, {0, 0, 0, std::log(3.0)});
  auto loss = cross_entropy(logits, {0, 1});
  // row 0: -log 0.5; row 1: -log 0.75
  const double expect = 0.5 * (-std::log(0.5) - std::log(0.75));
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(logits, {0, 2}), ShapeError);
}

TEST_CASE("non-finite results surface as errors, never propagate") {
  CHECK_THROWS_AS(Tensor<double>::from_data({1}, {std::numeric_limits<double>::infinity()}),
                  NumericError);
  auto big = Tensor<double>::filled({2}, 1e200);
  CHECK_THROWS_AS(mul(big, big), NumericError);
  // The large finite mask constant stays finite through softmax.
  auto masked = softmax(Tensor<double>::from_data({2}, {0.0, mask_neg<double>()}), 0);
  CHECK(masked.data()[0] == doctest::Approx(1.0));
  CHECK(masked.data()[1] == 0.0);
}

TEST_CASE("forward ops are deterministic in single-threaded mode") {
  std::mt19937_64 rng(123);
  auto x = Tensor<float>::randn({6, 7}, rng);
  auto w = Tensor<float>::randn({7, 5}, rng);
  auto y1 = matmul(x, w);
  auto y2 = matmul(x, w);
  CHECK(y1.data() == y2.data());
  auto s1 = softmax(x, 1);
  auto s2 = softmax(x, 1);
  CHECK(s1.data() == s2.data());
}

TEST_CASE("parallel matmul matches single-threaded bits") {
  std::mt19937_64 rng(77);
  auto a = Tensor<float>::randn({8, 40, 30}, rng);
  auto b = Tensor<float>::randn({8, 30, 20}, rng);
  auto single = matmul(a, b);
  set_num_threads(4);
  auto multi = matmul(a, b);
  set_num_threads(1);
  CHECK(single.data() == multi.data());
}
