// Single entry point: audits, verification, benchmarks, mask export and toy
// training behind one subcommand-style driver.
//
// Exit codes: 0 success, 1 audit/verification/training failure (last stdout
// line is then a machine-readable {"failures": [...]} object), 2 usage error.
// Every run prints its resolved configuration before acting, and all file
// outputs are written atomically (temp file + rename).

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "swin/bench.h"
#include "swin/checkpoint.h"
#include "swin/model.h"
#include "swin/train.h"
#include "swin/verify.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CliState {
  std::string variant = "T";
  int64_t input = 224;
  std::string dtype = "f32";
  uint64_t seed = 7;  // fixed constant, never entropy
  std::string pos = "rel";
  std::string threads = "1";
  std::string out;

  double tolerance = 0.0;  // per-subcommand default, set below
  bool instrument = false;

  int64_t reps = 30;
  int64_t warmup = 5;

  std::string task = "jog";
  int64_t steps = 400;
  int64_t img = 32;
  int64_t count = 256;
  bool pair_stage = false;
  bool no_shift = false;

  int64_t height = 8;
  int64_t width = 8;
  int64_t window = 4;
  int64_t shift = 2;
};

swin::PosMode parse_pos(const std::string& s) {
  if (s == "none") return swin::PosMode::none;
  if (s == "abs") return swin::PosMode::abs;
  if (s == "rel") return swin::PosMode::rel;
  if (s == "abs+rel") return swin::PosMode::abs_rel;
  return swin::PosMode::rel_no_app;
}

std::string upper_variant(const std::string& v) {
  std::string u = v;
  for (char& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return u;
}

void apply_threads(const std::string& mode) {
  swin::set_num_threads(mode == "auto" ? 0 : 1);
}

void print_resolved(const std::string& subcommand, const CliState& c,
                    const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  std::string line = "resolved: subcommand=" + subcommand + " variant=" + c.variant +
                     " input=" + std::to_string(c.input) + " dtype=" + c.dtype +
                     " seed=" + std::to_string(c.seed) + " pos=" + c.pos +
                     " threads=" + c.threads + " out=" + (c.out.empty() ? "-" : c.out);
  for (const auto& [k, v] : extra) line += " " + k + "=" + v;
  std::cout << line << "\n";
}

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";  // same directory, so the final rename is atomic
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

int fail_with(const ordered_json& failures) {
  std::cout << ordered_json{{"failures", failures}}.dump() << "\n";
  return 1;
}

template <typename Fn>
auto with_dtype(const std::string& dtype, Fn&& fn) {
  return dtype == "f64" ? fn(double{}) : fn(float{});
}

// ---------------------------------------------------------------------------
// describe
// ---------------------------------------------------------------------------
int run_describe(const CliState& c) {
  print_resolved("describe", c);
  const auto cfg = swin::ModelConfig::variant_config(c.variant, c.input, parse_pos(c.pos));
  std::cout << swin::describe(cfg);
  return 0;
}

// ---------------------------------------------------------------------------
// params
// ---------------------------------------------------------------------------
int run_params(const CliState& c) {
  print_resolved("params", c, {{"tolerance", std::to_string(c.tolerance)}});
  const auto cfg = swin::ModelConfig::variant_config(c.variant, c.input, parse_pos(c.pos));
  const auto report = swin::count_params(cfg);
  std::cout << report.to_text();

  static const std::map<std::string, double> reference = {
      {"T", 29e6}, {"S", 50e6}, {"B", 88e6}, {"L", 197e6}};
  ordered_json audit{{"variant", upper_variant(c.variant)},
                     {"measured", report.total},
                     {"by_module", report.to_json()["by_module"]}};
  ordered_json failures = ordered_json::array();
  // Reference counts assume the relative-bias parameterization; other
  // position modes change the parameter total by design.
  if (c.pos == "rel") {
    const double ref = reference.at(upper_variant(c.variant));
    const double dev = std::abs(static_cast<double>(report.total) - ref) / ref;
    const bool ok = dev <= c.tolerance;
    audit["reference"] = static_cast<uint64_t>(ref);
    audit["deviation"] = dev;
    audit["tolerance"] = c.tolerance;
    audit["ok"] = ok;
    std::printf("reference %.0f  deviation %.3f%%  tolerance %.1f%%  %s\n", ref, dev * 100,
                c.tolerance * 100, ok ? "ok" : "FAIL");
    if (!ok) {
      failures.push_back({{"check", "params"},
                          {"variant", upper_variant(c.variant)},
                          {"measured", report.total},
                          {"reference", static_cast<uint64_t>(ref)},
                          {"deviation", dev},
                          {"tolerance", c.tolerance}});
    }
  } else {
    std::cout << "no reference for pos=" << c.pos << "; printed counts only\n";
  }
  if (!c.out.empty()) atomic_write(c.out, audit.dump(1) + "\n");
  return failures.empty() ? 0 : fail_with(failures);
}

// ---------------------------------------------------------------------------
// flops
// ---------------------------------------------------------------------------
int run_flops(const CliState& c) {
  print_resolved("flops", c, {{"tolerance", std::to_string(c.tolerance)},
                              {"instrument", c.instrument ? "true" : "false"}});
  const auto cfg = swin::ModelConfig::variant_config(c.variant, c.input, parse_pos(c.pos));
  swin::FlopsReport report =
      c.instrument ? with_dtype(c.dtype,
                                [&](auto tag) {
                                  return swin::count_flops_instrumented<decltype(tag)>(cfg);
                                })
                   : swin::count_flops(cfg);
  std::cout << report.to_text();

  static const std::map<std::string, double> reference = {
      {"T", 4.5e9}, {"S", 8.7e9}, {"B", 15.4e9}, {"L", 34.5e9}};
  ordered_json audit = report.to_json();
  audit["variant"] = upper_variant(c.variant);
  ordered_json failures = ordered_json::array();
  // Reference MAC counts are quoted for 224x224 inputs with relative bias.
  if (c.input == 224 && c.pos == "rel") {
    const double ref = reference.at(upper_variant(c.variant));
    const double total = static_cast<double>(report.cf_total());
    const double dev = std::abs(total - ref) / ref;
    const bool ok = dev <= c.tolerance;
    audit["reference"] = static_cast<uint64_t>(ref);
    audit["deviation"] = dev;
    audit["tolerance"] = c.tolerance;
    audit["ok"] = ok;
    std::printf("reference %.3fG  deviation %.3f%%  tolerance %.1f%%  %s\n", ref * 1e-9,
                dev * 100, c.tolerance * 100, ok ? "ok" : "FAIL");
    if (!ok) {
      failures.push_back({{"check", "flops"},
                          {"variant", upper_variant(c.variant)},
                          {"measured", report.cf_total()},
                          {"reference", static_cast<uint64_t>(ref)},
                          {"deviation", dev},
                          {"tolerance", c.tolerance}});
    }
  } else {
    std::cout << "no reference for input=" << c.input << " pos=" << c.pos
              << "; printed counts only\n";
  }
  if (c.instrument && report.cf_attention != report.inst_attention()) {
    failures.push_back({{"check", "flops_instrumented"},
                        {"closed_form_attention", report.cf_attention},
                        {"instrumented_attention", report.inst_attention()}});
    std::cout << "closed-form attention MACs do not match the instrumented forward\n";
  }
  if (!c.out.empty()) atomic_write(c.out, audit.dump(1) + "\n");
  return failures.empty() ? 0 : fail_with(failures);
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------
int run_verify(const CliState& c) {
  print_resolved("verify", c);
  const auto report = with_dtype(c.dtype, [&](auto tag) {
    return swin::run_verification<decltype(tag)>(c.seed);
  });
  std::printf("verification: %lld checks, %zu failures\n",
              static_cast<long long>(report.checks_run), report.failures.size());
  if (!c.out.empty()) {
    atomic_write(c.out, ordered_json{{"checks_run", report.checks_run},
                                     {"failures", report.failures_json()}}
                            .dump(1) +
                            "\n");
  }
  return report.ok() ? 0 : fail_with(report.failures_json());
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------
int run_bench(const CliState& c) {
  print_resolved("bench", c, {{"reps", std::to_string(c.reps)},
                              {"warmup", std::to_string(c.warmup)}});
  auto specs = swin::default_bench_specs();
  for (auto& s : specs) {
    s.repetitions = c.reps;
    s.warmup = c.warmup;
  }
  const auto report = with_dtype(c.dtype, [&](auto tag) {
    return swin::run_bench<decltype(tag)>(specs);
  });
  std::cout << report.to_text();
  const auto summary = swin::compare(report);
  std::cout << summary.to_text();
  if (!c.out.empty()) {
    fs::path base = c.out;
    if (base.extension() == ".json") base.replace_extension();
    ordered_json j = report.to_json();
    j["comparison"] = summary.to_json();
    atomic_write(base.string() + ".json", j.dump(1) + "\n");
    atomic_write(base.string() + ".csv", report.to_csv());
  }
  if (summary.all_pass) return 0;
  ordered_json failures = ordered_json::array();
  for (const auto& l : summary.lines) {
    if (!l.pass) {
      failures.push_back({{"check", l.claim},
                          {"stage", l.stage},
                          {"ratio", l.ratio},
                          {"bar", l.bar}});
    }
  }
  return fail_with(failures);
}

// ---------------------------------------------------------------------------
// train-toy
// ---------------------------------------------------------------------------
template <typename T>
int train_toy_typed(const CliState& c) {
  swin::ToyTaskConfig tc;
  tc.img = c.img;
  tc.count = c.count;
  tc.kind = c.task == "sign"    ? swin::StripeKind::sign
            : c.task == "match" ? swin::StripeKind::match
                                : swin::StripeKind::jog;
  auto data = swin::make_boundary_dataset<T>(tc, c.seed);

  auto cfg = swin::toy_model_config(c.pair_stage, c.no_shift, c.img);
  swin::SwinModel<T> model(cfg, swin::SwinModel<T>::Init::random, c.seed);

  swin::TrainSettings ts;
  ts.steps = c.steps;
  ts.seed = c.seed;
  const auto log = swin::train_toy(model, data, ts);

  for (size_t i = 0; i < log.steps.size(); ++i) {
    if (i % 50 == 0 || i + 1 == log.steps.size()) {
      std::printf("step %4lld  loss %.4f  batch accuracy %.3f\n",
                  static_cast<long long>(log.steps[i].step), log.steps[i].loss,
                  log.steps[i].batch_accuracy);
    }
  }
  std::printf("final train accuracy %.4f over %lld samples\n", log.final_train_accuracy,
              static_cast<long long>(tc.count));

  if (!c.out.empty()) {
    fs::path base = c.out;
    if (base.extension() == ".json") base.replace_extension();
    ordered_json j = log.to_json();
    j["task"] = c.task;
    j["img"] = c.img;
    j["count"] = c.count;
    j["seed"] = c.seed;
    j["dtype"] = c.dtype;
    j["no_shift"] = c.no_shift;
    atomic_write(base.string() + ".json", j.dump(1) + "\n");

    const fs::path ckpt = base.string() + ".ckpt";
    if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
    fs::path tmp = ckpt;
    tmp += ".tmp";
    swin::save_checkpoint<T>(tmp.string(), model.parameters(),
                             {{"task", c.task},
                              {"img", c.img},
                              {"steps", c.steps},
                              {"seed", c.seed},
                              {"final_train_accuracy", log.final_train_accuracy}});
    fs::rename(tmp, ckpt);
  }
  return 0;
}

int run_train_toy(const CliState& c) {
  print_resolved("train-toy", c,
                 {{"task", c.task},
                  {"steps", std::to_string(c.steps)},
                  {"img", std::to_string(c.img)},
                  {"count", std::to_string(c.count)},
                  {"pair", c.pair_stage ? "true" : "false"},
                  {"no-shift", c.no_shift ? "true" : "false"}});
  return with_dtype(c.dtype, [&](auto tag) {
    return train_toy_typed<decltype(tag)>(c);
  });
}

// ---------------------------------------------------------------------------
// export-masks
// ---------------------------------------------------------------------------
int run_export_masks(const CliState& c) {
  print_resolved("export-masks", c,
                 {{"height", std::to_string(c.height)},
                  {"width", std::to_string(c.width)},
                  {"window", std::to_string(c.window)},
                  {"shift", std::to_string(c.shift)}});
  const swin::WindowConfig cfg{c.height, c.width, c.window, c.shift};
  const auto mask = swin::build_shift_mask(cfg);
  const auto rel = swin::relative_position_index(cfg.M);
  const auto regions = swin::shift_region_ids(cfg);

  ordered_json j;
  j["config"] = {{"h", cfg.h}, {"w", cfg.w}, {"M", cfg.M}, {"shift", cfg.shift}};
  j["padded"] = {{"h", cfg.padded_h()}, {"w", cfg.padded_w()}};
  j["grid"] = {mask.grid_h, mask.grid_w};
  auto& region_rows = j["region_ids"] = ordered_json::array();
  for (int64_t y = 0; y < cfg.padded_h(); ++y) {
    ordered_json row = ordered_json::array();
    for (int64_t x = 0; x < cfg.padded_w(); ++x) row.push_back(regions[y * cfg.padded_w() + x]);
    region_rows.push_back(std::move(row));
  }
  const int64_t n = cfg.M * cfg.M;
  auto& windows = j["windows"] = ordered_json::array();
  for (int64_t win = 0; win < mask.num_windows(); ++win) {
    ordered_json allow = ordered_json::array();
    for (int64_t i = 0; i < n; ++i) {
      ordered_json row = ordered_json::array();
      for (int64_t k = 0; k < n; ++k) row.push_back(mask.allowed(win, i, k) ? 1 : 0);
      allow.push_back(std::move(row));
    }
    windows.push_back({{"index", win}, {"allow", std::move(allow)}});
  }
  auto& buckets = j["rel_pos_index"] = ordered_json::array();
  for (int64_t i = 0; i < n; ++i) {
    ordered_json row = ordered_json::array();
    for (int64_t k = 0; k < n; ++k) row.push_back(rel.index[i * n + k]);
    buckets.push_back(std::move(row));
  }

  if (c.out.empty()) {
    std::cout << j.dump(1) << "\n";
  } else {
    atomic_write(c.out, j.dump() + "\n");
    std::cout << "wrote " << c.out << "\n";
  }
  return 0;
}

void add_common(CLI::App* sub, CliState& c) {
  sub->add_option("--variant", c.variant, "model variant")
      ->check(CLI::IsMember({"T", "S", "B", "L", "t", "s", "b", "l"}));
  sub->add_option("--input", c.input, "input image side in pixels")
      ->check(CLI::PositiveNumber);
  sub->add_option("--dtype", c.dtype, "compute precision")
      ->check(CLI::IsMember({"f32", "f64"}));
  sub->add_option("--seed", c.seed, "deterministic seed");
  sub->add_option("--pos", c.pos, "position encoding mode")
      ->check(CLI::IsMember({"none", "abs", "rel", "abs+rel", "rel-no-app"}));
  sub->add_option("--threads", c.threads, "thread mode")
      ->check(CLI::IsMember({"1", "auto"}));
  sub->add_option("--out", c.out, "output path");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shifted-window transformer: audits, verification, benchmarks, toy training"};
  app.require_subcommand(1);
  CliState c;
  std::function<int()> action;

  auto* d = app.add_subcommand("describe", "print the per-stage specification");
  add_common(d, c);
  d->callback([&] { action = [&] { return run_describe(c); }; });

  auto* p = app.add_subcommand("params", "audit the parameter count");
  add_common(p, c);
  p->add_option("--tolerance", c.tolerance, "relative tolerance")->check(CLI::PositiveNumber);
  p->callback([&] {
    action = [&] { return run_params(c); };
  });

  auto* f = app.add_subcommand("flops", "audit the MAC count");
  add_common(f, c);
  f->add_option("--tolerance", c.tolerance, "relative tolerance")->check(CLI::PositiveNumber);
  f->add_flag("--instrument", c.instrument, "also meter a real forward pass");
  f->callback([&] {
    action = [&] { return run_flops(c); };
  });

  auto* v = app.add_subcommand("verify", "run the correctness oracle suite");
  add_common(v, c);
  v->callback([&] { action = [&] { return run_verify(c); }; });

  auto* b = app.add_subcommand("bench", "time the attention strategies");
  add_common(b, c);
  b->add_option("--reps", c.reps, "timed repetitions per case")->check(CLI::Range(30, 100000));
  b->add_option("--warmup", c.warmup, "warmup repetitions per case")
      ->check(CLI::Range(5, 100000));
  b->callback([&] { action = [&] { return run_bench(c); }; });

  auto* t = app.add_subcommand("train-toy", "train a tiny model on a boundary task");
  add_common(t, c);
  t->add_option("--task", c.task, "boundary task kind")
      ->check(CLI::IsMember({"jog", "sign", "match"}));
  t->add_option("--steps", c.steps, "optimizer steps")->check(CLI::PositiveNumber);
  t->add_option("--img", c.img, "toy image side in pixels")->check(CLI::PositiveNumber);
  t->add_option("--count", c.count, "dataset size")->check(CLI::PositiveNumber);
  t->add_flag("--pair", c.pair_stage, "use a two-block first stage");
  t->add_flag("--no-shift", c.no_shift, "disable the shifted configuration");
  t->callback([&] { action = [&] { return run_train_toy(c); }; });

  auto* e = app.add_subcommand("export-masks", "dump mask and bucket tables as JSON");
  add_common(e, c);
  e->add_option("--height", c.height, "map height in tokens")->check(CLI::PositiveNumber);
  e->add_option("--width", c.width, "map width in tokens")->check(CLI::PositiveNumber);
  e->add_option("--window", c.window, "window side")->check(CLI::PositiveNumber);
  e->add_option("--shift", c.shift, "shift amount")->check(CLI::NonNegativeNumber);
  e->callback([&] { action = [&] { return run_export_masks(c); }; });

  // Subcommand-specific tolerance defaults; a --tolerance flag overrides.
  if (argc >= 2) {
    const std::string first = argv[1];
    if (first == "params") c.tolerance = 0.03;
    if (first == "flops") c.tolerance = 0.05;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  if (c.shift >= c.window && app.got_subcommand(e)) {
    std::cerr << "export-masks: --shift must be smaller than --window\n";
    return 2;
  }

  apply_threads(c.threads);
  try {
    return action();
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    ordered_json failures = ordered_json::array();
    failures.push_back({{"check", "internal"}, {"detail", ex.what()}});
    return fail_with(failures);
  }
}
