// Python surface for the core operations: windowing, masks, position
// buckets, the three attention strategies, bias-table resizing, model
// forwards and the parameter/MAC audits. Everything runs in float64, the
// numpy default, which also gives the equivalence checks their sharpest
// tolerances.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "swin/checkpoint.h"
#include "swin/model.h"
#include "swin/train.h"

namespace py = pybind11;
using swin::Tensor;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> to_tensor(const DoubleArray& a) {
  swin::Shape shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = a.shape(i);
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor<double>::from_data(std::move(shape), std::move(data));
}

py::array_t<double> to_array(const Tensor<double>& t) {
  py::array_t<double> a(t.shape());
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::object json_to_py(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

swin::PosMode pos_of(const std::string& s) {
  if (s == "none") return swin::PosMode::none;
  if (s == "abs") return swin::PosMode::abs;
  if (s == "rel") return swin::PosMode::rel;
  if (s == "abs+rel") return swin::PosMode::abs_rel;
  if (s == "rel-no-app") return swin::PosMode::rel_no_app;
  throw std::invalid_argument("unknown position mode '" + s +
                              "' (expected none, abs, rel, abs+rel or rel-no-app)");
}

swin::WindowConfig config_for(const Tensor<double>& x, int64_t M, int64_t shift) {
  if (x.rank() != 3) {
    throw std::invalid_argument("expected an [h, w, C] array, got rank " +
                                std::to_string(x.rank()));
  }
  return swin::WindowConfig{x.dim(0), x.dim(1), M, shift};
}

}  // namespace

PYBIND11_MODULE(swin_core, m) {
  m.doc() = "shifted-window transformer core operations (float64)";

  // -------------------------------------------------------------- windowing
  m.def(
      "window_partition",
      [](const DoubleArray& x, int64_t M) { return to_array(swin::window_partition(to_tensor(x), M)); },
      py::arg("x"), py::arg("window"),
      "Split an [h, w, C] map into [numWindows, window^2, C] tiles.");
  m.def(
      "window_reverse",
      [](const DoubleArray& windows, int64_t M, int64_t h, int64_t w) {
        return to_array(swin::window_reverse(to_tensor(windows), M, h, w));
      },
      py::arg("windows"), py::arg("window"), py::arg("h"), py::arg("w"),
      "Inverse of window_partition.");
  m.def(
      "window_counts",
      [](int64_t h, int64_t w, int64_t M) {
        const auto c = swin::window_counts(h, w, M);
        return py::make_tuple(c.regular, c.shifted);
      },
      py::arg("h"), py::arg("w"), py::arg("window"),
      "(regular, displaced) window counts for a map.");

  // ------------------------------------------------------------------ masks
  m.def(
      "shift_mask",
      [](int64_t h, int64_t w, int64_t M, int64_t shift) {
        const swin::WindowConfig cfg{h, w, M, shift};
        const auto mask = swin::build_shift_mask(cfg);
        const auto regions = swin::shift_region_ids(cfg);
        const int64_t n = M * M;
        py::array_t<uint8_t> allow({mask.num_windows(), n, n});
        std::copy(mask.allow.begin(), mask.allow.end(), allow.mutable_data());
        py::array_t<int32_t> ids({cfg.padded_h(), cfg.padded_w()});
        std::copy(regions.begin(), regions.end(), ids.mutable_data());
        py::dict out;
        out["grid"] = py::make_tuple(mask.grid_h, mask.grid_w);
        out["allow"] = allow;
        out["region_ids"] = ids;
        return out;
      },
      py::arg("h"), py::arg("w"), py::arg("window"), py::arg("shift"),
      "Attend/forbid table per window plus the rolled-frame region ids.");
  m.def(
      "relative_position_index",
      [](int64_t M) {
        const auto idx = swin::relative_position_index(M);
        const int64_t n = M * M;
        py::array_t<int64_t> out({n, n});
        std::copy(idx.index.begin(), idx.index.end(), out.mutable_data());
        return out;
      },
      py::arg("window"), "Bucket of each token pair's 2-D offset, [window^2, window^2].");

  // -------------------------------------------------------------- attention
  py::class_<swin::WindowAttentionParams<double>>(m, "AttentionParams")
      .def_readonly("dim", &swin::WindowAttentionParams<double>::dim)
      .def_readonly("num_heads", &swin::WindowAttentionParams<double>::num_heads)
      .def_readonly("window", &swin::WindowAttentionParams<double>::M)
      .def_property_readonly("bias_table", [](const swin::WindowAttentionParams<double>& p) {
        return to_array(p.bias_table);
      });
  m.def(
      "random_attention_params",
      [](int64_t dim, int64_t heads, int64_t M, const std::string& pos, uint64_t seed) {
        std::mt19937_64 rng(seed);
        return swin::WindowAttentionParams<double>::random(dim, heads, M, pos_of(pos), rng);
      },
      py::arg("dim"), py::arg("heads"), py::arg("window"), py::arg("pos") = "rel",
      py::arg("seed") = 7);
  m.def(
      "shifted_attention_cyclic",
      [](const DoubleArray& x, const swin::WindowAttentionParams<double>& p, int64_t shift) {
        swin::NoGradGuard ng;
        auto t = to_tensor(x);
        return to_array(swin::shifted_window_attention_cyclic(t, p, config_for(t, p.M, shift)));
      },
      py::arg("x"), py::arg("params"), py::arg("shift"),
      "Roll, attend in the regular partition under the shift mask, roll back.");
  m.def(
      "shifted_attention_padded",
      [](const DoubleArray& x, const swin::WindowAttentionParams<double>& p, int64_t shift) {
        swin::NoGradGuard ng;
        auto t = to_tensor(x);
        return to_array(swin::shifted_window_attention_padded(t, p, config_for(t, p.M, shift)));
      },
      py::arg("x"), py::arg("params"), py::arg("shift"),
      "Displaced partition over a padded frame; same result, more windows.");
  m.def(
      "shifted_attention_brute",
      [](const DoubleArray& x, const swin::WindowAttentionParams<double>& p, int64_t shift) {
        swin::NoGradGuard ng;
        auto t = to_tensor(x);
        return to_array(swin::brute_force_shifted_attention(t, p, config_for(t, p.M, shift)));
      },
      py::arg("x"), py::arg("params"), py::arg("shift"),
      "Per-token reference evaluation; the oracle the fast paths must match.");
  m.def(
      "interpolate_bias_table",
      [](const DoubleArray& table, int64_t m_from, int64_t m_to) {
        return to_array(swin::interpolate_bias_table(to_tensor(table), m_from, m_to));
      },
      py::arg("table"), py::arg("m_from"), py::arg("m_to"),
      "Bicubic resize of a [heads, (2m-1)^2] bias table between window sizes.");

  // ----------------------------------------------------------------- audits
  m.def(
      "describe",
      [](const std::string& variant, int64_t input, const std::string& pos) {
        return swin::describe(swin::ModelConfig::variant_config(variant, input, pos_of(pos)));
      },
      py::arg("variant"), py::arg("input") = 224, py::arg("pos") = "rel");
  m.def(
      "params_report",
      [](const std::string& variant, int64_t input, const std::string& pos) {
        const auto cfg = swin::ModelConfig::variant_config(variant, input, pos_of(pos));
        return json_to_py(swin::count_params(cfg).to_json());
      },
      py::arg("variant"), py::arg("input") = 224, py::arg("pos") = "rel");
  m.def(
      "flops_report",
      [](const std::string& variant, int64_t input, const std::string& pos) {
        const auto cfg = swin::ModelConfig::variant_config(variant, input, pos_of(pos));
        return json_to_py(swin::count_flops(cfg).to_json());
      },
      py::arg("variant"), py::arg("input") = 224, py::arg("pos") = "rel");

  // ------------------------------------------------------------------ model
  py::class_<swin::SwinModel<double>>(m, "Model")
      .def(
          "forward",
          [](const swin::SwinModel<double>& model, const DoubleArray& image) {
            swin::NoGradGuard ng;
            return to_array(model.forward(to_tensor(image)));
          },
          py::arg("image"), "Logits for an [h, w, 3] image.")
      .def(
          "save",
          [](swin::SwinModel<double>& model, const std::string& path) {
            swin::save_checkpoint<double>(path, model.parameters());
          },
          py::arg("path"))
      .def(
          "load",
          [](swin::SwinModel<double>& model, const std::string& path) {
            return json_to_py(swin::load_checkpoint<double>(path, model.parameters()));
          },
          py::arg("path"), "Restore parameters in place; returns the stored metadata.")
      .def_property_readonly("param_count", [](swin::SwinModel<double>& model) {
        uint64_t total = 0;
        for (auto* p : model.parameters()) total += p->value.numel();
        return total;
      });
  m.def(
      "toy_model",
      [](int64_t img, bool pair, bool no_shift, uint64_t seed) {
        return swin::SwinModel<double>(swin::toy_model_config(pair, no_shift, img),
                                       swin::SwinModel<double>::Init::random, seed);
      },
      py::arg("img") = 32, py::arg("pair") = false, py::arg("no_shift") = false,
      py::arg("seed") = 7, "Small 4-stage model for experiments.");
  m.def(
      "variant_model",
      [](const std::string& tag, int64_t input, const std::string& pos, uint64_t seed) {
        return swin::SwinModel<double>(
            swin::ModelConfig::variant_config(tag, input, pos_of(pos)),
            swin::SwinModel<double>::Init::random, seed);
      },
      py::arg("variant"), py::arg("input") = 224, py::arg("pos") = "rel", py::arg("seed") = 7);
}
