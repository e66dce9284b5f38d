#pragma once

// Hierarchical backbone: patch embedding, four stages of window-attention
// blocks with alternating shift, patch merging between stages, global
// average pooling and a linear classification head. Also the token-mixing
// block variant, and the parameter / multiply-accumulate auditors that
// reconcile closed-form complexity with instrumented counts.

#include <cstdio>
#include <deque>
#include <functional>
#include <unordered_map>

#include <json.hpp>

#include "swin/attention.h"
#include "swin/optim.h"

namespace swin {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
  std::string variant = "custom";
  int64_t img_h = 224, img_w = 224;
  int64_t patch_size = 4;
  int64_t in_chans = 3;
  int64_t embed_dim = 96;                      // stage-1 channels C
  std::vector<int64_t> depths{2, 2, 6, 2};     // blocks per stage
  std::vector<int64_t> heads{3, 6, 12, 24};    // heads per stage
  int64_t window = 7;                          // window side M
  double mlp_ratio = 4.0;                      // MLP expansion alpha
  int64_t num_classes = 1000;
  PosMode pos = PosMode::rel;
  bool mixer = false;                          // token-mixing blocks instead of attention
  int64_t mixer_group_dim = 0;                 // channels per mixing group D; 0 = head_dim
  bool disable_shift = false;                  // ablation: force every block to shift 0

  int64_t num_stages() const { return static_cast<int64_t>(depths.size()); }
  int64_t head_dim() const { return embed_dim / heads.at(0); }
  int64_t stage_dim(int64_t s) const { return embed_dim << s; }
  int64_t stage_heads(int64_t s) const { return heads.at(static_cast<size_t>(s)); }
  int64_t mlp_hidden(int64_t s) const {
    return static_cast<int64_t>(std::llround(mlp_ratio * static_cast<double>(stage_dim(s))));
  }
  int64_t group_dim() const { return mixer_group_dim > 0 ? mixer_group_dim : head_dim(); }
  int64_t patch_dim() const { return patch_size * patch_size * in_chans; }

  // Token extents entering stage s (patch grid, then halved per merge; odd
  // extents are padded up before merging).
  std::pair<int64_t, int64_t> stage_resolution(int64_t s) const {
    int64_t h = (img_h + patch_size - 1) / patch_size;
    int64_t w = (img_w + patch_size - 1) / patch_size;
    for (int64_t i = 0; i < s; ++i) {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    return {h, w};
  }
  int64_t shift_for_block(int64_t block_index) const {
    if (disable_shift) return 0;
    return (block_index % 2 == 1) ? window / 2 : 0;
  }

  void validate() const {
    if (depths.size() != 4 || heads.size() != 4) {
      throw ShapeError("ModelConfig: expected 4 stages, got " + std::to_string(depths.size()) +
                       " depths and " + std::to_string(heads.size()) + " head counts");
    }
    if (embed_dim < 1 || heads[0] < 1 || embed_dim % heads[0] != 0) {
      throw ShapeError("ModelConfig: embed_dim " + std::to_string(embed_dim) +
                       " is not divisible into " + std::to_string(heads[0]) + " heads");
    }
    const int64_t d = head_dim();
    for (int64_t s = 0; s < num_stages(); ++s) {
      if (depths[s] < 1) throw ShapeError("ModelConfig: stage depths must be >= 1");
      if (stage_heads(s) * d != stage_dim(s)) {
        throw ShapeError("ModelConfig: heads[" + std::to_string(s) + "]*head_dim != dim (" +
                         std::to_string(stage_heads(s)) + "*" + std::to_string(d) +
                         " != " + std::to_string(stage_dim(s)) + ")");
      }
      if (mixer && stage_dim(s) % group_dim() != 0) {
        throw ShapeError("ModelConfig: mixing group dim " + std::to_string(group_dim()) +
                         " does not divide stage dim " + std::to_string(stage_dim(s)));
      }
    }
    if (patch_size < 1 || in_chans < 1 || window < 1 || num_classes < 1 || mlp_ratio <= 0) {
      throw ShapeError("ModelConfig: patch/window/classes/mlp_ratio out of range");
    }
    if (img_h < patch_size || img_w < patch_size) {
      throw ShapeError("ModelConfig: input smaller than one patch");
    }
  }

  // Standard variants: T/S/B/L at window 7, patch 4, head width 32.
  static ModelConfig variant_config(const std::string& tag, int64_t input = 224,
                                    PosMode pos_mode = PosMode::rel) {
    ModelConfig c;
    c.img_h = c.img_w = input;
    c.pos = pos_mode;
    if (tag == "T" || tag == "t") {
      c.variant = "swin-t";
      c.embed_dim = 96;
      c.depths = {2, 2, 6, 2};
      c.heads = {3, 6, 12, 24};
    } else if (tag == "S" || tag == "s") {
      c.variant = "swin-s";
      c.embed_dim = 96;
      c.depths = {2, 2, 18, 2};
      c.heads = {3, 6, 12, 24};
    } else if (tag == "B" || tag == "b") {
      c.variant = "swin-b";
      c.embed_dim = 128;
      c.depths = {2, 2, 18, 2};
      c.heads = {4, 8, 16, 32};
    } else if (tag == "L" || tag == "l") {
      c.variant = "swin-l";
      c.embed_dim = 192;
      c.depths = {2, 2, 18, 2};
      c.heads = {6, 12, 24, 48};
    } else {
      throw ShapeError("variant_config: unknown variant '" + tag + "' (expected T, S, B or L)");
    }
    c.validate();
    return c;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["variant"] = variant;
    j["img_h"] = img_h;
    j["img_w"] = img_w;
    j["patch_size"] = patch_size;
    j["in_chans"] = in_chans;
    j["embed_dim"] = embed_dim;
    j["depths"] = depths;
    j["heads"] = heads;
    j["window"] = window;
    j["mlp_ratio"] = mlp_ratio;
    j["num_classes"] = num_classes;
    j["pos"] = pos_mode_name(pos);
    j["mixer"] = mixer;
    j["mixer_group_dim"] = mixer_group_dim;
    j["disable_shift"] = disable_shift;
    return j;
  }

  static ModelConfig from_json(const nlohmann::ordered_json& j) {
    ModelConfig c;
    c.variant = j.value("variant", c.variant);
    c.img_h = j.value("img_h", c.img_h);
    c.img_w = j.value("img_w", c.img_w);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.in_chans = j.value("in_chans", c.in_chans);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.depths = j.value("depths", c.depths);
    c.heads = j.value("heads", c.heads);
    c.window = j.value("window", c.window);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.num_classes = j.value("num_classes", c.num_classes);
    const std::string p = j.value("pos", "rel");
    if (p == "none") c.pos = PosMode::none;
    else if (p == "abs") c.pos = PosMode::abs;
    else if (p == "rel") c.pos = PosMode::rel;
    else if (p == "abs+rel") c.pos = PosMode::abs_rel;
    else if (p == "rel-no-app") c.pos = PosMode::rel_no_app;
    else throw ShapeError("ModelConfig: unknown position mode '" + p + "'");
    c.mixer = j.value("mixer", c.mixer);
    c.mixer_group_dim = j.value("mixer_group_dim", c.mixer_group_dim);
    c.disable_shift = j.value("disable_shift", c.disable_shift);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Canonical parameter enumeration: one callback per parameter, in the fixed
// order used by the builder, the auditors and checkpoints alike.
// ---------------------------------------------------------------------------

inline void for_each_param_shape(
    const ModelConfig& cfg,
    const std::function<void(const std::string&, const Shape&)>& fn) {
  cfg.validate();
  const int64_t C = cfg.embed_dim, M = cfg.window, side = 2 * M - 1;
  fn("patch_embed.proj.weight", {C, cfg.patch_dim()});
  fn("patch_embed.proj.bias", {C});
  fn("patch_embed.norm.gamma", {C});
  fn("patch_embed.norm.beta", {C});
  if (pos_uses_abs(cfg.pos)) {
    const auto [h0, w0] = cfg.stage_resolution(0);
    fn("pos_embed", {h0 * w0, C});
  }
  for (int64_t s = 0; s < cfg.num_stages(); ++s) {
    const int64_t Cs = cfg.stage_dim(s);
    const std::string sp = "stages." + std::to_string(s) + ".";
    if (s > 0) {
      const int64_t Cp = cfg.stage_dim(s - 1);
      fn(sp + "merge.norm.gamma", {4 * Cp});
      fn(sp + "merge.norm.beta", {4 * Cp});
      fn(sp + "merge.reduce.weight", {Cs, 4 * Cp});  // no bias by convention
    }
    for (int64_t b = 0; b < cfg.depths[s]; ++b) {
      const std::string bp = sp + "blocks." + std::to_string(b) + ".";
      fn(bp + "norm1.gamma", {Cs});
      fn(bp + "norm1.beta", {Cs});
      if (cfg.mixer) {
        fn(bp + "mix.weight", {Cs / cfg.group_dim(), M * M, M * M});
      } else {
        fn(bp + "attn.qkv.weight", {3 * Cs, Cs});
        fn(bp + "attn.qkv.bias", {3 * Cs});
        fn(bp + "attn.proj.weight", {Cs, Cs});
        fn(bp + "attn.proj.bias", {Cs});
        fn(bp + "attn.bias_table", {cfg.stage_heads(s), side * side});
      }
      fn(bp + "norm2.gamma", {Cs});
      fn(bp + "norm2.beta", {Cs});
      fn(bp + "mlp.fc1.weight", {cfg.mlp_hidden(s), Cs});
      fn(bp + "mlp.fc1.bias", {cfg.mlp_hidden(s)});
      fn(bp + "mlp.fc2.weight", {Cs, cfg.mlp_hidden(s)});
      fn(bp + "mlp.fc2.bias", {Cs});
    }
  }
  const int64_t Cf = cfg.stage_dim(cfg.num_stages() - 1);
  fn("norm.gamma", {Cf});
  fn("norm.beta", {Cf});
  fn("head.weight", {cfg.num_classes, Cf});
  fn("head.bias", {cfg.num_classes});
}

// ---------------------------------------------------------------------------
// Token mixing (the attention replacement of the mixer variant): within each
// window, tokens are mixed by an M^2 x M^2 matrix shared across each group of
// D channels; the shifted geometry reuses the cyclic path, and masked pairs
// contribute zero mixing weight.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> window_token_mix(const Tensor<T>& x, const Tensor<T>& mix_w, const WindowConfig& cfg,
                           int64_t group_dim) {
  const int64_t c = x.dim(2), n = cfg.M * cfg.M, groups = c / group_dim;
  if (c % group_dim != 0 || mix_w.shape() != Shape{groups, n, n}) {
    throw ShapeError("window_token_mix: mixing weight " + shape_str(mix_w.shape()) +
                     " does not match channels " + std::to_string(c) + " with group dim " +
                     std::to_string(group_dim));
  }
  auto path = apply_cyclic_path(x, cfg);
  const int64_t nw = path.windows.dim(0);

  std::vector<T> allow(nw * n * n, T{1});
  if (path.mask) {
    for (int64_t w = 0; w < nw; ++w)
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
          allow[(w * n + i) * n + j] = path.mask->allowed(w, i, j) ? T{1} : T{0};
  }
  auto gate = Tensor<T>::from_data({nw, 1, n, n}, std::move(allow));
  auto w_eff = mul(reshape(mix_w, {1, groups, n, n}), gate);        // [nw, G, n, n]
  auto grouped = permute(reshape(path.windows, {nw, n, groups, group_dim}), {0, 2, 1, 3});
  auto mixed = matmul(w_eff, grouped);                              // [nw, G, n, D]
  auto windows = reshape(permute(mixed, {0, 2, 1, 3}), {nw, n, c});
  return undo_cyclic_path(windows, cfg);
}

// ---------------------------------------------------------------------------
// The model
// ---------------------------------------------------------------------------

template <typename T>
class SwinModel {
 public:
  enum class Init { structured_zeros, random };

  explicit SwinModel(ModelConfig cfg, Init init = Init::random, uint64_t seed = 7)
      : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    for_each_param_shape(cfg_, [&](const std::string& name, const Shape& shape) {
      Tensor<T> t;
      const bool is_gamma = name.ends_with(".gamma");
      const bool is_zero_init = name.ends_with(".bias") || name.ends_with(".beta");
      if (is_gamma) {
        t = Tensor<T>::filled(shape, T{1});
      } else if (is_zero_init || init == Init::structured_zeros) {
        t = Tensor<T>::zeros(shape);
      } else {
        t = Tensor<T>::trunc_normal(shape, rng, static_cast<T>(0.02));
      }
      store_.push_back(Parameter<T>{name, t, true});
      by_name_[name] = &store_.back();
    });
    bind_structure();
  }

  const ModelConfig& config() const { return cfg_; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(&p);
    return out;
  }

  Parameter<T>& param(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ShapeError("model: no parameter named '" + name + "'");
    return *it->second;
  }

  void set_trainable(bool requires_grad) {
    for (auto& p : store_) p.value.set_requires_grad(requires_grad);
  }

  // image: [H, W, in_chans] -> logits [1, num_classes]
  Tensor<T> forward(const Tensor<T>& image) const {
    if (image.rank() != 3 || image.dim(2) != cfg_.in_chans) {
      throw ShapeError("forward: image " + shape_str(image.shape()) + " does not have " +
                       std::to_string(cfg_.in_chans) + " channels");
    }
    Tensor<T> x = embed(image);
    for (int64_t s = 0; s < cfg_.num_stages(); ++s) {
      if (s > 0) x = merge(x, s);
      for (int64_t b = 0; b < cfg_.depths[s]; ++b) x = block(x, s, b);
    }
    {
      MeterScope scope("head");
      x = layer_norm(x, final_norm_g_, final_norm_b_);
      auto pooled = mean_rows(reshape(x, {x.dim(0) * x.dim(1), x.dim(2)}));
      return linear(pooled, head_w_, head_b_);
    }
  }

  // The pieces of forward(), public so block-level behavior (identity under
  // zeroed projections, gradient checks, shift ablations) can be probed on
  // the real parameterization.
  Tensor<T> embed(const Tensor<T>& image) const {
    MeterScope scope("patch_embed");
    const int64_t p = cfg_.patch_size;
    Tensor<T> img = image;
    const int64_t ph = ((img.dim(0) + p - 1) / p) * p, pw = ((img.dim(1) + p - 1) / p) * p;
    if (ph != img.dim(0) || pw != img.dim(1)) img = pad_hw(img, ph, pw);
    const int64_t gh = ph / p, gw = pw / p;
    auto patches = reshape(
        permute(reshape(img, {gh, p, gw, p, cfg_.in_chans}), {0, 2, 1, 3, 4}),
        {gh * gw, cfg_.patch_dim()});
    auto tokens = layer_norm(linear(patches, patch_w_, patch_b_), patch_ng_, patch_nb_);
    if (pos_uses_abs(cfg_.pos)) {
      if (tokens.dim(0) != pos_embed_.dim(0)) {
        throw ShapeError("forward: absolute position table covers " +
                         std::to_string(pos_embed_.dim(0)) + " tokens, image yields " +
                         std::to_string(tokens.dim(0)));
      }
      tokens = add(tokens, pos_embed_);
    }
    return reshape(tokens, {gh, gw, cfg_.embed_dim});
  }

  Tensor<T> merge(const Tensor<T>& x_in, int64_t s) const {
    MeterScope scope("merge");
    const StageH& st = stages_[static_cast<size_t>(s)];
    Tensor<T> x = x_in;
    const int64_t he = (x.dim(0) + 1) / 2 * 2, we = (x.dim(1) + 1) / 2 * 2;
    if (he != x.dim(0) || we != x.dim(1)) x = pad_hw(x, he, we);
    const int64_t c = x.dim(2);
    // 2x2 group concatenation in row-major group order (a, b, c, d).
    auto grouped = reshape(permute(reshape(x, {he / 2, 2, we / 2, 2, c}), {0, 2, 1, 3, 4}),
                           {he / 2, we / 2, 4 * c});
    auto normed = layer_norm(grouped, st.merge_ng, st.merge_nb);
    return linear(normed, st.merge_w);  // 4C -> 2C, no bias
  }

  Tensor<T> block(const Tensor<T>& x, int64_t s, int64_t b) const {
    const BlockH& bl = stages_[static_cast<size_t>(s)].blocks[static_cast<size_t>(b)];
    const WindowConfig wc{x.dim(0), x.dim(1), cfg_.window, bl.shift};
    Tensor<T> t = layer_norm(x, bl.n1g, bl.n1b);
    Tensor<T> attended;
    {
      MeterScope scope("attn");
      attended = cfg_.mixer ? window_token_mix(t, bl.mix, wc, cfg_.group_dim())
                            : shifted_window_attention_cyclic(t, bl.attn, wc);
    }
    Tensor<T> y = add(x, attended);
    {
      MeterScope scope("mlp");
      t = layer_norm(y, bl.n2g, bl.n2b);
      t = linear(gelu(linear(t, bl.fc1w, bl.fc1b)), bl.fc2w, bl.fc2b);
    }
    return add(y, t);
  }

 private:
  struct BlockH {
    Tensor<T> n1g, n1b, n2g, n2b, fc1w, fc1b, fc2w, fc2b, mix;
    WindowAttentionParams<T> attn;
    int64_t shift = 0;
  };
  struct StageH {
    Tensor<T> merge_ng, merge_nb, merge_w;
    std::vector<BlockH> blocks;
  };

  void bind_structure() {
    auto get = [&](const std::string& name) { return param(name).value; };
    patch_w_ = get("patch_embed.proj.weight");
    patch_b_ = get("patch_embed.proj.bias");
    patch_ng_ = get("patch_embed.norm.gamma");
    patch_nb_ = get("patch_embed.norm.beta");
    if (pos_uses_abs(cfg_.pos)) pos_embed_ = get("pos_embed");
    stages_.resize(static_cast<size_t>(cfg_.num_stages()));
    for (int64_t s = 0; s < cfg_.num_stages(); ++s) {
      StageH& st = stages_[static_cast<size_t>(s)];
      const std::string sp = "stages." + std::to_string(s) + ".";
      if (s > 0) {
        st.merge_ng = get(sp + "merge.norm.gamma");
        st.merge_nb = get(sp + "merge.norm.beta");
        st.merge_w = get(sp + "merge.reduce.weight");
      }
      st.blocks.resize(static_cast<size_t>(cfg_.depths[s]));
      for (int64_t b = 0; b < cfg_.depths[s]; ++b) {
        BlockH& bl = st.blocks[static_cast<size_t>(b)];
        const std::string bp = sp + "blocks." + std::to_string(b) + ".";
        bl.shift = cfg_.shift_for_block(b);
        bl.n1g = get(bp + "norm1.gamma");
        bl.n1b = get(bp + "norm1.beta");
        bl.n2g = get(bp + "norm2.gamma");
        bl.n2b = get(bp + "norm2.beta");
        bl.fc1w = get(bp + "mlp.fc1.weight");
        bl.fc1b = get(bp + "mlp.fc1.bias");
        bl.fc2w = get(bp + "mlp.fc2.weight");
        bl.fc2b = get(bp + "mlp.fc2.bias");
        if (cfg_.mixer) {
          bl.mix = get(bp + "mix.weight");
        } else {
          auto& a = bl.attn;
          a.dim = cfg_.stage_dim(s);
          a.num_heads = cfg_.stage_heads(s);
          a.head_dim = cfg_.head_dim();
          a.M = cfg_.window;
          // Absolute-position handling lives in the embedding; inside the
          // blocks only the relative/bias part of the mode matters.
          a.pos = pos_uses_bias(cfg_.pos) ? (cfg_.pos == PosMode::rel_no_app
                                                 ? PosMode::rel_no_app
                                                 : PosMode::rel)
                                          : PosMode::none;
          a.qkv_w = get(bp + "attn.qkv.weight");
          a.qkv_b = get(bp + "attn.qkv.bias");
          a.proj_w = get(bp + "attn.proj.weight");
          a.proj_b = get(bp + "attn.proj.bias");
          a.bias_table = get(bp + "attn.bias_table");
        }
      }
    }
    final_norm_g_ = get("norm.gamma");
    final_norm_b_ = get("norm.beta");
    head_w_ = get("head.weight");
    head_b_ = get("head.bias");
  }

  ModelConfig cfg_;
  std::deque<Parameter<T>> store_;
  std::unordered_map<std::string, Parameter<T>*> by_name_;
  Tensor<T> patch_w_, patch_b_, patch_ng_, patch_nb_, pos_embed_;
  Tensor<T> final_norm_g_, final_norm_b_, head_w_, head_b_;
  std::vector<StageH> stages_;
};

// ---------------------------------------------------------------------------
// Parameter audit
// ---------------------------------------------------------------------------

struct ParamReport {
  uint64_t total = 0;
  std::vector<std::pair<std::string, uint64_t>> by_module;  // patch_embed, stages.N, head, norm

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["total"] = total;
    auto& m = j["by_module"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : by_module) m[k] = v;
    return j;
  }
  std::string to_text() const {
    std::string out = "module            parameters\n";
    char buf[64];
    for (const auto& [k, v] : by_module) {
      std::snprintf(buf, sizeof(buf), "%-16s %12llu\n", k.c_str(),
                    static_cast<unsigned long long>(v));
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "%-16s %12llu\n", "total",
                  static_cast<unsigned long long>(total));
    out += buf;
    return out;
  }
};

inline ParamReport count_params(const ModelConfig& cfg) {
  ParamReport r;
  std::vector<std::string> order;
  std::map<std::string, uint64_t> grouped;
  for_each_param_shape(cfg, [&](const std::string& name, const Shape& shape) {
    // Group by "stages.N" or the first path component.
    std::string key;
    if (name.rfind("stages.", 0) == 0) {
      key = name.substr(0, name.find('.', 7));
    } else {
      key = name.substr(0, name.find('.'));
    }
    if (grouped.find(key) == grouped.end()) order.push_back(key);
    const uint64_t n = static_cast<uint64_t>(shape_numel(shape));
    grouped[key] += n;
    r.total += n;
  });
  for (const auto& k : order) r.by_module.emplace_back(k, grouped[k]);
  return r;
}

// ---------------------------------------------------------------------------
// Multiply-accumulate audit. Closed forms follow the complexity convention
// used for the architecture tables: MAC units, softmax/norm/activation
// excluded. The attention term per block is
//     4 P C^2 + 2 M^2 P C      (P = padded token count of the stage)
// which the instrumented forward must reproduce exactly; "flops" fields
// report the 2-ops-per-MAC doubling.
// ---------------------------------------------------------------------------

struct FlopsReport {
  uint64_t cf_patch = 0, cf_attention = 0, cf_mlp = 0, cf_merge = 0, cf_head = 0;
  uint64_t inst_total = 0;
  std::map<std::string, uint64_t> inst_buckets;
  bool instrumented = false;

  uint64_t cf_total() const { return cf_patch + cf_attention + cf_mlp + cf_merge + cf_head; }
  uint64_t inst_attention() const {
    auto it = inst_buckets.find("attn");
    return it == inst_buckets.end() ? 0 : it->second;
  }
  double cf_total_gmacs() const { return static_cast<double>(cf_total()) * 1e-9; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["closed_form_macs"] = {{"patch_embed", cf_patch}, {"attention", cf_attention},
                             {"mlp", cf_mlp},           {"merge", cf_merge},
                             {"head", cf_head},         {"total", cf_total()}};
    j["closed_form_flops_2x"] = cf_total() * 2;
    if (instrumented) {
      j["instrumented_macs"] = {{"total", inst_total}};
      for (const auto& [k, v] : inst_buckets) j["instrumented_macs"][k] = v;
    }
    return j;
  }
  std::string to_text() const {
    char buf[96];
    std::string out = "term             closed-form MACs";
    out += instrumented ? "   instrumented MACs\n" : "\n";
    auto line = [&](const char* k, uint64_t cf, int64_t inst) {
      if (inst >= 0) {
        std::snprintf(buf, sizeof(buf), "%-16s %16llu %19llu\n", k,
                      static_cast<unsigned long long>(cf), static_cast<unsigned long long>(inst));
      } else {
        std::snprintf(buf, sizeof(buf), "%-16s %16llu\n", k, static_cast<unsigned long long>(cf));
      }
      out += buf;
    };
    auto bucket = [&](const char* k) -> int64_t {
      if (!instrumented) return -1;
      auto it = inst_buckets.find(k);
      return it == inst_buckets.end() ? 0 : static_cast<int64_t>(it->second);
    };
    line("patch_embed", cf_patch, bucket("patch_embed"));
    line("attention", cf_attention, bucket("attn"));
    line("mlp", cf_mlp, bucket("mlp"));
    line("merge", cf_merge, bucket("merge"));
    line("head", cf_head, bucket("head"));
    line("total", cf_total(), instrumented ? static_cast<int64_t>(inst_total) : -1);
    return out;
  }
};

// Attention term of one block at padded token count P: 4 P C^2 + 2 M^2 P C.
inline uint64_t attention_macs(int64_t P, int64_t C, int64_t M) {
  return 4ull * P * C * C + 2ull * M * M * P * C;
}

inline FlopsReport count_flops(const ModelConfig& cfg) {
  cfg.validate();
  FlopsReport r;
  const int64_t M = cfg.window;
  {
    const auto [h0, w0] = cfg.stage_resolution(0);
    r.cf_patch = static_cast<uint64_t>(h0 * w0) * cfg.patch_dim() * cfg.embed_dim;
  }
  for (int64_t s = 0; s < cfg.num_stages(); ++s) {
    const auto [h, w] = cfg.stage_resolution(s);
    const int64_t C = cfg.stage_dim(s);
    const int64_t P = ((h + M - 1) / M) * M * ((w + M - 1) / M) * M;  // padded tokens
    if (s > 0) {
      const int64_t Cp = cfg.stage_dim(s - 1);
      r.cf_merge += static_cast<uint64_t>(h * w) * 4 * Cp * (2 * Cp);
    }
    for (int64_t b = 0; b < cfg.depths[s]; ++b) {
      r.cf_attention += cfg.mixer ? static_cast<uint64_t>(P) * M * M * C
                                  : attention_macs(P, C, M);
      r.cf_mlp += 2ull * h * w * C * cfg.mlp_hidden(s);
    }
  }
  r.cf_head = static_cast<uint64_t>(cfg.stage_dim(cfg.num_stages() - 1)) * cfg.num_classes;
  return r;
}

// Runs one structured-zeros forward under a meter and attaches the
// instrumented counts to the closed-form report.
template <typename T>
FlopsReport count_flops_instrumented(const ModelConfig& cfg) {
  FlopsReport r = count_flops(cfg);
  SwinModel<T> model(cfg, SwinModel<T>::Init::structured_zeros);
  auto image = Tensor<T>::zeros({cfg.img_h, cfg.img_w, cfg.in_chans});
  FlopsMeter meter;
  {
    MeterGuard guard(meter);
    NoGradGuard ng;
    (void)model.forward(image);
  }
  r.inst_total = meter.total_macs();
  r.inst_buckets = meter.buckets();
  r.instrumented = true;
  return r;
}

// Table-style per-stage description of a configuration.
inline std::string describe(const ModelConfig& cfg) {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf),
                "%s: input %lldx%lld, patch %lld, window %lld, mlp ratio %.1f, head dim %lld, "
                "pos %s%s\n",
                cfg.variant.c_str(), (long long)cfg.img_h, (long long)cfg.img_w,
                (long long)cfg.patch_size, (long long)cfg.window, cfg.mlp_ratio,
                (long long)cfg.head_dim(), pos_mode_name(cfg.pos),
                cfg.mixer ? ", token-mixing blocks" : "");
  out += buf;
  out += "stage   output size      dim   heads  blocks  shifts\n";
  for (int64_t s = 0; s < cfg.num_stages(); ++s) {
    const auto [h, w] = cfg.stage_resolution(s);
    std::string shifts;
    for (int64_t b = 0; b < cfg.depths[s]; ++b) {
      shifts += std::to_string(cfg.shift_for_block(b));
      if (b + 1 < cfg.depths[s]) shifts += ",";
    }
    std::snprintf(buf, sizeof(buf), "%5lld   %4lldx%-4lld   %6lld  %6lld  %6lld  %s\n",
                  (long long)(s + 1), (long long)h, (long long)w, (long long)cfg.stage_dim(s),
                  (long long)cfg.stage_heads(s), (long long)cfg.depths[s], shifts.c_str());
    out += buf;
  }
  const ParamReport pr = count_params(cfg);
  std::snprintf(buf, sizeof(buf), "parameters: %llu\n",
                static_cast<unsigned long long>(pr.total));
  out += buf;
  return out;
}

}  // namespace swin
