#include "swin/bench.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace swin {

const char* bench_method_name(BenchMethod m) {
  switch (m) {
    case BenchMethod::sliding_naive: return "sliding-naive";
    case BenchMethod::window_no_shift: return "window-no-shift";
    case BenchMethod::shifted_padded: return "shifted-padded";
    case BenchMethod::shifted_cyclic: return "shifted-cyclic";
  }
  throw ShapeError("bench_method_name: unknown method");
}

BenchMethod bench_method_from_name(const std::string& name) {
  for (BenchMethod m : {BenchMethod::sliding_naive, BenchMethod::window_no_shift,
                        BenchMethod::shifted_padded, BenchMethod::shifted_cyclic}) {
    if (name == bench_method_name(m)) return m;
  }
  throw ShapeError("bench method '" + name + "' is not one of sliding-naive, "
                   "window-no-shift, shifted-padded, shifted-cyclic");
}

std::vector<StageGeometry> swin_t_stage_geometries() {
  return {
      {"stage1", 56, 56, 96, 3, 7},
      {"stage2", 28, 28, 192, 6, 7},
      {"stage3", 14, 14, 384, 12, 7},
      {"stage4", 7, 7, 768, 24, 7},
  };
}

void BenchSpec::validate() const {
  if (repetitions < 30) {
    throw ShapeError("BenchSpec: repetitions " + std::to_string(repetitions) +
                     " < 30; medians need at least 30 samples");
  }
  if (warmup < 5) {
    throw ShapeError("BenchSpec: warmup " + std::to_string(warmup) + " < 5");
  }
  if (stage.h < 1 || stage.w < 1 || stage.channels < 1 || stage.heads < 1 ||
      stage.window < 1) {
    throw ShapeError("BenchSpec: stage geometry fields must be positive");
  }
  if (stage.channels % stage.heads != 0) {
    throw ShapeError("BenchSpec: channels " + std::to_string(stage.channels) +
                     " not divisible by heads " + std::to_string(stage.heads));
  }
  if (method == BenchMethod::sliding_naive && stage.window % 2 == 0) {
    throw ShapeError("BenchSpec: sliding-naive needs an odd window, got " +
                     std::to_string(stage.window));
  }
}

std::vector<BenchSpec> default_bench_specs() {
  std::vector<BenchSpec> specs;
  for (const auto& g : swin_t_stage_geometries()) {
    for (BenchMethod m : {BenchMethod::window_no_shift, BenchMethod::shifted_padded,
                          BenchMethod::shifted_cyclic}) {
      specs.push_back({m, g, 30, 5});
    }
    if (g.name == "stage1") {
      specs.push_back({BenchMethod::sliding_naive, g, 30, 5});
    }
  }
  return specs;
}

const BenchRow* BenchReport::find(const std::string& method, const std::string& stage) const {
  for (const auto& r : rows) {
    if (r.method == method && r.stage == stage) return &r;
  }
  return nullptr;
}

nlohmann::ordered_json BenchReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = schema;
  j["dtype"] = dtype;
  j["thread_mode"] = thread_mode;
  j["batch"] = batch;
  auto& arr = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"method", r.method},
                   {"stage", r.stage},
                   {"h", r.h},
                   {"w", r.w},
                   {"channels", r.channels},
                   {"heads", r.heads},
                   {"window", r.window},
                   {"repetitions", r.repetitions},
                   {"warmup", r.warmup},
                   {"median_ms", r.median_ms},
                   {"iqr_ms", r.iqr_ms},
                   {"macs", r.macs},
                   {"windows", r.windows}});
  }
  return j;
}

std::string BenchReport::to_csv() const {
  std::ostringstream os;
  os << "schema,dtype,thread_mode,batch,method,stage,h,w,channels,heads,window,"
        "repetitions,warmup,median_ms,iqr_ms,macs,windows\n";
  for (const auto& r : rows) {
    os << schema << ',' << dtype << ',' << thread_mode << ',' << batch << ','
       << r.method << ',' << r.stage << ',' << r.h << ',' << r.w << ','
       << r.channels << ',' << r.heads << ',' << r.window << ','
       << r.repetitions << ',' << r.warmup << ',' << std::setprecision(6)
       << std::fixed << r.median_ms << ',' << r.iqr_ms << ','
       << std::defaultfloat << r.macs << ',' << r.windows << '\n';
  }
  return os.str();
}

std::string BenchReport::to_text() const {
  std::ostringstream os;
  os << "attention benchmark (dtype " << dtype << ", " << thread_mode
     << "-thread, batch " << batch << ")\n";
  os << std::left << std::setw(17) << "method" << std::setw(8) << "stage"
     << std::right << std::setw(10) << "tokens" << std::setw(12) << "median_ms"
     << std::setw(10) << "iqr_ms" << std::setw(15) << "macs" << std::setw(9)
     << "windows" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(17) << r.method << std::setw(8) << r.stage
       << std::right << std::setw(7) << r.h << "x" << std::left << std::setw(2)
       << r.w << std::right << std::fixed << std::setprecision(3)
       << std::setw(12) << r.median_ms << std::setw(10) << r.iqr_ms
       << std::defaultfloat << std::setw(15) << r.macs << std::setw(9)
       << r.windows << '\n';
  }
  return os.str();
}

namespace {

double quantile_ms(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

template <typename T>
struct StageInputs {
  Tensor<T> x;
  WindowAttentionParams<T> params;
};

template <typename T>
StageInputs<T> make_stage_inputs(const StageGeometry& g) {
  // Seed derived from the geometry so every method in a stage sees the same
  // tensors and different stages see different ones.
  std::mt19937_64 rng(0x5117 + 1000003 * g.h + 1009 * g.channels + g.window);
  StageInputs<T> in{Tensor<T>::randn({g.h, g.w, g.channels}, rng),
                    WindowAttentionParams<T>::random(g.channels, g.heads, g.window,
                                                     PosMode::rel, rng)};
  return in;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) -
                                     static_cast<double>(b.data()[i])));
  }
  return worst;
}

}  // namespace

template <typename T>
BenchReport run_bench(const std::vector<BenchSpec>& specs) {
  for (const auto& s : specs) s.validate();
  NoGradGuard no_grad;
  BenchReport report;
  report.dtype = dtype_name<T>();
  report.thread_mode = num_threads() == 1 ? "single" : "auto";

  std::map<std::string, StageInputs<T>> inputs;
  auto stage_inputs = [&](const StageGeometry& g) -> StageInputs<T>& {
    auto it = inputs.find(g.name);
    if (it == inputs.end()) it = inputs.emplace(g.name, make_stage_inputs<T>(g)).first;
    return it->second;
  };

  // Equivalence precheck: wherever both shifted strategies are requested for
  // a stage, their outputs must agree before any timing is trusted.
  for (const auto& s : specs) {
    if (s.method != BenchMethod::shifted_cyclic) continue;
    for (const auto& o : specs) {
      if (o.method != BenchMethod::shifted_padded || o.stage.name != s.stage.name) continue;
      const auto& g = s.stage;
      auto& in = stage_inputs(g);
      WindowConfig cfg{g.h, g.w, g.window, g.window / 2};
      auto a = shifted_window_attention_cyclic(in.x, in.params, cfg);
      auto b = shifted_window_attention_padded(in.x, in.params, cfg);
      const double tol = std::is_same_v<T, float> ? 5e-3 : 1e-8;
      const double diff = max_abs_diff(a, b);
      if (!(diff <= tol)) {
        throw NumericError("bench equivalence precheck failed at " + g.name +
                           ": padded vs cyclic differ by " + std::to_string(diff));
      }
    }
  }

  for (const auto& spec : specs) {
    const auto& g = spec.stage;
    auto& in = stage_inputs(g);
    const WindowConfig plain{g.h, g.w, g.window, 0};
    const WindowConfig shifted{g.h, g.w, g.window, g.window / 2};

    auto run_once = [&]() -> Tensor<T> {
      switch (spec.method) {
        case BenchMethod::sliding_naive:
          return sliding_window_attention(in.x, in.params);
        case BenchMethod::window_no_shift:
          return shifted_window_attention_cyclic(in.x, in.params, plain);
        case BenchMethod::shifted_padded:
          return shifted_window_attention_padded(in.x, in.params, shifted);
        case BenchMethod::shifted_cyclic:
          return shifted_window_attention_cyclic(in.x, in.params, shifted);
      }
      throw ShapeError("run_bench: unknown method");
    };

    BenchRow row;
    row.method = bench_method_name(spec.method);
    row.stage = g.name;
    row.h = g.h;
    row.w = g.w;
    row.channels = g.channels;
    row.heads = g.heads;
    row.window = g.window;
    row.repetitions = spec.repetitions;
    row.warmup = spec.warmup;

    switch (spec.method) {
      case BenchMethod::sliding_naive:
        row.windows = g.h * g.w;  // one neighbourhood per pixel
        break;
      case BenchMethod::shifted_padded: {
        const auto ay = displaced_anchors(shifted.padded_h(), g.window, shifted.shift);
        const auto ax = displaced_anchors(shifted.padded_w(), g.window, shifted.shift);
        row.windows = static_cast<int64_t>(ay.size() * ax.size());
        break;
      }
      default:
        row.windows = plain.num_windows();
    }

    std::vector<double> times_ms;
    times_ms.reserve(static_cast<size_t>(spec.repetitions));
    int64_t macs = -1;
    for (int64_t rep = 0; rep < spec.warmup + spec.repetitions; ++rep) {
      FlopsMeter meter;
      const auto start = std::chrono::steady_clock::now();
      {
        MeterGuard guard(meter);
        auto out = run_once();
        (void)out;
      }
      const auto stop = std::chrono::steady_clock::now();
      const int64_t rep_macs = meter.total_macs();
      if (macs < 0) {
        macs = rep_macs;
      } else if (macs != rep_macs) {
        throw NumericError("run_bench: MAC count changed between repetitions at " +
                           g.name + " (" + std::to_string(macs) + " vs " +
                           std::to_string(rep_macs) + ")");
      }
      if (rep >= spec.warmup) {
        times_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
      }
    }
    row.macs = macs;
    std::sort(times_ms.begin(), times_ms.end());
    row.median_ms = quantile_ms(times_ms, 0.5);
    row.iqr_ms = quantile_ms(times_ms, 0.75) - quantile_ms(times_ms, 0.25);
    report.rows.push_back(std::move(row));
  }
  return report;
}

template BenchReport run_bench<float>(const std::vector<BenchSpec>&);
template BenchReport run_bench<double>(const std::vector<BenchSpec>&);

nlohmann::ordered_json CompareSummary::to_json() const {
  nlohmann::ordered_json j;
  j["all_pass"] = all_pass;
  auto& arr = j["lines"] = nlohmann::ordered_json::array();
  for (const auto& l : lines) {
    arr.push_back({{"stage", l.stage},
                   {"claim", l.claim},
                   {"ratio", l.ratio},
                   {"bar", l.bar},
                   {"pass", l.pass}});
  }
  return j;
}

std::string CompareSummary::to_text() const {
  std::ostringstream os;
  for (const auto& l : lines) {
    os << std::left << std::setw(8) << l.stage << std::setw(26) << l.claim
       << std::right << std::fixed << std::setprecision(3) << std::setw(9)
       << l.ratio;
    if (l.bar > 0.0) {
      os << "  (bar " << std::setprecision(1) << l.bar << ")";
    } else {
      os << "  (no latency bar)";
    }
    os << ' ' << (l.pass ? "pass" : "FAIL") << '\n';
  }
  os << (all_pass ? "all comparisons pass" : "COMPARISON FAILURES PRESENT") << '\n';
  return os.str();
}

CompareSummary compare(const BenchReport& report) {
  CompareSummary sum;
  std::vector<std::string> stages;
  for (const auto& r : report.rows) {
    if (std::find(stages.begin(), stages.end(), r.stage) == stages.end()) {
      stages.push_back(r.stage);
    }
  }
  for (const auto& stage : stages) {
    const BenchRow* sliding = report.find("sliding-naive", stage);
    const BenchRow* window = report.find("window-no-shift", stage);
    const BenchRow* padded = report.find("shifted-padded", stage);
    const BenchRow* cyclic = report.find("shifted-cyclic", stage);

    if (cyclic && padded) {
      CompareLine l;
      l.stage = stage;
      l.claim = "cyclic_vs_padded_time";
      l.ratio = padded->median_ms / cyclic->median_ms;
      // The desk-scale latency bar applies where the shift blows the window
      // grid up from 1x1 to 2x2 — the stage-4-like geometry.
      const bool stage4_like = cyclic->windows == 1 && padded->windows == 4;
      l.bar = stage4_like ? 1.1 : 0.0;
      l.pass = l.bar == 0.0 || l.ratio >= l.bar;
      sum.lines.push_back(l);
    }
    if (window && sliding) {
      CompareLine l;
      l.stage = stage;
      l.claim = "window_vs_sliding_time";
      l.ratio = sliding->median_ms / window->median_ms;
      l.bar = 5.0;
      l.pass = l.ratio >= l.bar;
      sum.lines.push_back(l);
    }

    // Machine-independent MAC ordering, asserted exactly.
    CompareLine mac;
    mac.stage = stage;
    mac.claim = "mac_ordering";
    mac.bar = 0.0;
    mac.pass = true;
    if (padded && cyclic) {
      mac.ratio = static_cast<double>(padded->macs) / static_cast<double>(cyclic->macs);
      mac.pass = mac.pass && padded->macs >= cyclic->macs;
      if (padded->windows > cyclic->windows) {
        mac.pass = mac.pass && padded->macs > cyclic->macs;
      }
    }
    if (cyclic && window) mac.pass = mac.pass && cyclic->macs == window->macs;
    if (sliding && padded) mac.pass = mac.pass && sliding->macs >= padded->macs;
    if (sliding && window) mac.pass = mac.pass && sliding->macs >= window->macs;
    sum.lines.push_back(mac);
  }
  for (const auto& l : sum.lines) sum.all_pass = sum.all_pass && l.pass;
  return sum;
}

}  // namespace swin
