#pragma once

// Latency benchmark for the attention strategies on per-stage geometries:
// deterministic work (instrumented MAC counts must not vary across reps),
// median-of-N timing with IQR dispersion, and machine-independent MAC
// ordering assertions. Timing claims are made only as relative orderings.

#include <string>
#include <vector>

#include <json.hpp>

#include "swin/attention.h"

namespace swin {

enum class BenchMethod { sliding_naive, window_no_shift, shifted_padded, shifted_cyclic };

const char* bench_method_name(BenchMethod m);
BenchMethod bench_method_from_name(const std::string& name);

struct StageGeometry {
  std::string name;  // e.g. "stage1"
  int64_t h = 0, w = 0;  // token extents
  int64_t channels = 0;
  int64_t heads = 0;
  int64_t window = 0;
};

// The four Swin-T stage geometries at 224^2 input (56^2 .. 7^2 tokens, M=7).
std::vector<StageGeometry> swin_t_stage_geometries();

struct BenchSpec {
  BenchMethod method = BenchMethod::window_no_shift;
  StageGeometry stage;
  int64_t repetitions = 30;
  int64_t warmup = 5;

  void validate() const;
};

// Every method on every stage, except sliding-naive which only runs on the
// geometry it is claimed against (stage 1): its per-pixel re-computation is
// orders of magnitude more work and adds nothing at the other extents.
std::vector<BenchSpec> default_bench_specs();

struct BenchRow {
  std::string method;
  std::string stage;
  int64_t h = 0, w = 0, channels = 0, heads = 0, window = 0;
  int64_t repetitions = 0, warmup = 0;
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  int64_t macs = 0;     // instrumented attention MACs per run (identical across reps)
  int64_t windows = 0;  // windows processed per run
};

struct BenchReport {
  int schema = 1;
  std::string dtype;
  std::string thread_mode;  // "single" or "auto"
  int64_t batch = 1;
  std::vector<BenchRow> rows;

  const BenchRow* find(const std::string& method, const std::string& stage) const;
  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
  std::string to_text() const;
};

template <typename T>
BenchReport run_bench(const std::vector<BenchSpec>& specs);

struct CompareLine {
  std::string stage;
  std::string claim;   // e.g. "cyclic_vs_padded"
  double ratio = 0.0;  // >1 means the first-named method is faster
  double bar = 0.0;    // 0 = informational only
  bool pass = true;
};

struct CompareSummary {
  std::vector<CompareLine> lines;
  bool all_pass = true;

  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

// Speedup ratios with pass/fail against the desk-scale margins: cyclic vs
// padded >= 1.1 where the padded anchor grid is 2x2 (the stage-4-like case),
// window vs sliding >= 5 where both were measured. Also re-asserts the exact
// MAC ordering sliding >= padded >= cyclic = window per stage.
CompareSummary compare(const BenchReport& report);

}  // namespace swin
