// Copyright 2026 The PulseForge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulseforge/norm_module.hpp"
#include "pulseforge/rng.hpp"

namespace pulseforge {

/// EfficientPhys-T configuration. T1 keeps the reference depths [2,2,6,2];
/// T2 is the lightweight [2,1] variant. Widths are desk-scale defaults for
/// 36x36 inputs; patch merging doubles the embedding dim between stages.
struct TransformerConfig {
  std::vector<int> depths{2, 1};
  int embed_dim = 24;
  std::vector<int> heads{3, 6};
  int window = 3;
  int patch = 4;
  double mlp_ratio = 4.0;
  int input_size = 36;
  int frames_per_window = 21;
  int in_channels = 3;
  int fold_div = 3;
  bool use_norm_module = true;
  bool use_tsm = true;

  static TransformerConfig t1() {
    TransformerConfig c;
    c.depths = {2, 2, 6, 2};
    c.heads = {3, 6, 12, 24};
    return c;
  }
  static TransformerConfig t2() { return TransformerConfig{}; }

  void validate() const {
    require(!depths.empty() && depths.size() == heads.size(),
            "transformer config: depths and heads must align");
    for (std::size_t s = 0; s < depths.size(); ++s) {
      require(depths[s] >= 1 && heads[s] >= 1,
              "transformer config: depths and heads must be positive");
      const int dim = embed_dim << s;
      require(dim % heads[s] == 0,
              "transformer config: stage dim must divide into heads");
    }
    require(window >= 1 && patch >= 1 && embed_dim >= fold_div,
            "transformer config: window/patch/embed_dim invalid");
    require(frames_per_window >= 2, "transformer config: window of frames");
  }

  int stage_dim(std::size_t s) const { return embed_dim << s; }
  int block_count() const {
    int n = 0;
    for (int d : depths) n += d;
    return n;
  }
  /// One TSM insertion before every block.
  int tsm_count() const { return use_tsm ? block_count() : 0; }

  nlohmann::json to_json() const {
    return {{"depths", depths},       {"embed_dim", embed_dim},
            {"heads", heads},         {"window", window},
            {"patch", patch},         {"mlp_ratio", mlp_ratio},
            {"input_size", input_size},
            {"frames_per_window", frames_per_window},
            {"in_channels", in_channels},
            {"fold_div", fold_div},
            {"use_norm_module", use_norm_module},
            {"use_tsm", use_tsm}};
  }

  static TransformerConfig from_json(const nlohmann::json& j) {
    TransformerConfig c;
    if (j.contains("depths")) c.depths = j["depths"].get<std::vector<int>>();
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    if (j.contains("heads")) c.heads = j["heads"].get<std::vector<int>>();
    c.window = j.value("window", c.window);
    c.patch = j.value("patch", c.patch);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.input_size = j.value("input_size", c.input_size);
    c.frames_per_window = j.value("frames_per_window", c.frames_per_window);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.fold_div = j.value("fold_div", c.fold_div);
    c.use_norm_module = j.value("use_norm_module", c.use_norm_module);
    c.use_tsm = j.value("use_tsm", c.use_tsm);
    c.validate();
    return c;
  }
};

/// Index plan for one (grid, window, shifted, frames) combination: cyclic
/// shift, zero-padding to a window multiple, window partition, and the
/// additive attention mask that keeps shifted or padded positions apart.
struct WindowPlan {
  std::int64_t grid_h = 0, grid_w = 0;   // valid token grid
  std::int64_t pad_h = 0, pad_w = 0;     // padded grid (window multiple)
  std::int64_t window = 0, n_windows = 0;
  bool shifted = false;
  // token-row maps over [T*G] rows
  std::shared_ptr<std::vector<std::int64_t>> partition;  // [T*nW*w*w]
  std::shared_ptr<std::vector<std::int64_t>> reverse;    // [T*G]
  // additive mask per window [nW, w*w, w*w]; empty when nothing is masked
  std::vector<float> mask;
};

inline WindowPlan build_window_plan(std::int64_t grid_h, std::int64_t grid_w,
                                    std::int64_t window, bool shifted,
                                    std::int64_t frames) {
  WindowPlan plan;
  plan.grid_h = grid_h;
  plan.grid_w = grid_w;
  plan.window = window;
  plan.shifted = shifted;
  plan.pad_h = (grid_h + window - 1) / window * window;
  plan.pad_w = (grid_w + window - 1) / window * window;
  const std::int64_t wh = plan.pad_h / window, ww = plan.pad_w / window;
  plan.n_windows = wh * ww;
  const std::int64_t shift = shifted ? window / 2 : 0;
  const std::int64_t g = grid_h * grid_w;
  const std::int64_t w2 = window * window;

  // source token (or -1) for every padded+shifted grid position
  auto source_of = [&](std::int64_t y, std::int64_t x) {
    const std::int64_t sy = (y + shift + plan.pad_h) % plan.pad_h;
    const std::int64_t sx = (x + shift + plan.pad_w) % plan.pad_w;
    if (sy >= grid_h || sx >= grid_w) return std::int64_t{-1};
    return sy * grid_w + sx;
  };
  // region ids in shifted coordinates (the standard three bands per axis):
  // the final `shift` rows/cols of the rolled grid hold wrapped data and get
  // their own band so they never attend across the seam; -1 marks padding
  auto band = [&](std::int64_t v, std::int64_t size) {
    if (v < size - window) return std::int64_t{0};
    if (v < size - shift) return std::int64_t{1};
    return std::int64_t{2};
  };
  std::vector<std::int64_t> shifted_region(
      static_cast<std::size_t>(plan.pad_h * plan.pad_w));
  for (std::int64_t y = 0; y < plan.pad_h; ++y) {
    for (std::int64_t x = 0; x < plan.pad_w; ++x) {
      const bool valid = source_of(y, x) >= 0;
      shifted_region[static_cast<std::size_t>(y * plan.pad_w + x)] =
          valid ? (shift > 0 ? band(y, plan.pad_h) * 3 + band(x, plan.pad_w)
                             : 0)
                : -1;
    }
  }

  plan.partition = std::make_shared<std::vector<std::int64_t>>();
  plan.partition->resize(
      static_cast<std::size_t>(frames * plan.n_windows * w2), -1);
  plan.reverse =
      std::make_shared<std::vector<std::int64_t>>(
          static_cast<std::size_t>(frames * g), -1);
  for (std::int64_t t = 0; t < frames; ++t) {
    for (std::int64_t wy = 0; wy < wh; ++wy) {
      for (std::int64_t wx = 0; wx < ww; ++wx) {
        const std::int64_t widx = wy * ww + wx;
        for (std::int64_t py = 0; py < window; ++py) {
          for (std::int64_t px = 0; px < window; ++px) {
            const std::int64_t y = wy * window + py, x = wx * window + px;
            const std::int64_t src = source_of(y, x);
            const std::int64_t out_row =
                ((t * plan.n_windows + widx) * w2) + py * window + px;
            if (src >= 0) {
              (*plan.partition)[static_cast<std::size_t>(out_row)] =
                  t * g + src;
              (*plan.reverse)[static_cast<std::size_t>(t * g + src)] = out_row;
            }
          }
        }
      }
    }
  }

  // additive mask: key j must share the query's region and not be padding
  bool needs_mask = shifted;
  if (plan.pad_h != grid_h || plan.pad_w != grid_w) needs_mask = true;
  if (needs_mask) {
    plan.mask.assign(static_cast<std::size_t>(plan.n_windows * w2 * w2), 0.0f);
    for (std::int64_t wy = 0; wy < wh; ++wy) {
      for (std::int64_t wx = 0; wx < ww; ++wx) {
        const std::int64_t widx = wy * ww + wx;
        for (std::int64_t i = 0; i < w2; ++i) {
          const std::int64_t yi = wy * window + i / window;
          const std::int64_t xi = wx * window + i % window;
          const std::int64_t ri =
              shifted_region[static_cast<std::size_t>(yi * plan.pad_w + xi)];
          for (std::int64_t j = 0; j < w2; ++j) {
            const std::int64_t yj = wy * window + j / window;
            const std::int64_t xj = wx * window + j % window;
            const std::int64_t rj =
                shifted_region[static_cast<std::size_t>(yj * plan.pad_w + xj)];
            if (rj < 0 || rj != ri) {
              plan.mask[static_cast<std::size_t>((widx * w2 + i) * w2 + j)] =
                  -1e9f;
            }
          }
        }
      }
    }
  }
  return plan;
}

/// Weights of one windowed-attention block.
template <typename S>
struct WindowBlockParams {
  Parameter<S> norm1_g, norm1_b;
  Parameter<S> qkv_w, qkv_b;
  Parameter<S> proj_w, proj_b;
  Parameter<S> norm2_g, norm2_b;
  Parameter<S> fc1_w, fc1_b, fc2_w, fc2_b;
  int heads = 1;

  std::vector<Parameter<S>*> parameters() {
    return {&norm1_g, &norm1_b, &qkv_w, &qkv_b, &proj_w, &proj_b,
            &norm2_g, &norm2_b, &fc1_w, &fc1_b, &fc2_w,  &fc2_b};
  }
};

/// EfficientPhys-T: TSM before every windowed-attention block, patch merging
/// between stages, per-frame pooled linear head.
template <typename S>
class EfficientPhysT {
 public:
  EfficientPhysT() = default;

  EfficientPhysT(const TransformerConfig& cfg, std::uint64_t seed)
      : cfg_(cfg) {
    cfg_.validate();
    RngStream root(seed);
    norm_ = NormalizationModule<S>(cfg_.in_channels);
    const std::int64_t patch_in =
        static_cast<std::int64_t>(cfg_.patch) * cfg_.patch * cfg_.in_channels;
    std::uint64_t salt = 1;
    patch_w_ = make_dense("patch_embed.weight", patch_in, cfg_.embed_dim,
                          root.fork(salt++));
    patch_b_ = Parameter<S>("patch_embed.bias",
                            Tensor<S>::zeros({cfg_.embed_dim}));
    patch_ng_ = Parameter<S>("patch_embed.norm.gamma",
                             Tensor<S>::full({cfg_.embed_dim}, S(1)));
    patch_nb_ = Parameter<S>("patch_embed.norm.beta",
                             Tensor<S>::zeros({cfg_.embed_dim}));

    for (std::size_t s = 0; s < cfg_.depths.size(); ++s) {
      const std::int64_t dim = cfg_.stage_dim(s);
      std::vector<WindowBlockParams<S>> stage;
      for (int b = 0; b < cfg_.depths[s]; ++b) {
        const std::string prefix =
            "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
        WindowBlockParams<S> blk;
        blk.heads = cfg_.heads[s];
        blk.norm1_g = Parameter<S>(prefix + "norm1.gamma",
                                   Tensor<S>::full({dim}, S(1)));
        blk.norm1_b =
            Parameter<S>(prefix + "norm1.beta", Tensor<S>::zeros({dim}));
        blk.qkv_w = make_dense(prefix + "attn.qkv.weight", dim, 3 * dim,
                               root.fork(salt++));
        blk.qkv_b = Parameter<S>(prefix + "attn.qkv.bias",
                                 Tensor<S>::zeros({3 * dim}));
        blk.proj_w = make_dense(prefix + "attn.proj.weight", dim, dim,
                                root.fork(salt++));
        blk.proj_b = Parameter<S>(prefix + "attn.proj.bias",
                                  Tensor<S>::zeros({dim}));
        blk.norm2_g = Parameter<S>(prefix + "norm2.gamma",
                                   Tensor<S>::full({dim}, S(1)));
        blk.norm2_b =
            Parameter<S>(prefix + "norm2.beta", Tensor<S>::zeros({dim}));
        const auto hidden = static_cast<std::int64_t>(
            std::lround(cfg_.mlp_ratio * static_cast<double>(dim)));
        blk.fc1_w = make_dense(prefix + "mlp.fc1.weight", dim, hidden,
                               root.fork(salt++));
        blk.fc1_b =
            Parameter<S>(prefix + "mlp.fc1.bias", Tensor<S>::zeros({hidden}));
        blk.fc2_w = make_dense(prefix + "mlp.fc2.weight", hidden, dim,
                               root.fork(salt++));
        blk.fc2_b =
            Parameter<S>(prefix + "mlp.fc2.bias", Tensor<S>::zeros({dim}));
        stage.push_back(std::move(blk));
      }
      blocks_.push_back(std::move(stage));
      if (s + 1 < cfg_.depths.size()) {
        const std::int64_t next = cfg_.stage_dim(s + 1);
        const std::string prefix = "merge" + std::to_string(s) + ".";
        MergeParams m;
        m.norm_g = Parameter<S>(prefix + "norm.gamma",
                                Tensor<S>::full({4 * dim}, S(1)));
        m.norm_b =
            Parameter<S>(prefix + "norm.beta", Tensor<S>::zeros({4 * dim}));
        m.w = make_dense(prefix + "weight", 4 * dim, next, root.fork(salt++));
        m.b = Parameter<S>(prefix + "bias", Tensor<S>::zeros({next}));
        merges_.push_back(std::move(m));
      }
    }
    const std::int64_t final_dim =
        cfg_.stage_dim(cfg_.depths.size() - 1);
    head_w_ = make_dense("head.weight", final_dim, 1, root.fork(salt++));
    head_b_ = Parameter<S>("head.bias", Tensor<S>::zeros({1}));
  }

  const TransformerConfig& config() const { return cfg_; }

  /// Patch embedding: non-overlapping patch projection + layer norm.
  /// Returns [T*G, D] token rows for a grid of (size/patch)^2 tokens.
  Tensor<S> patch_embed(const Tensor<S>& frames_norm) {
    const auto T = frames_norm.dim(0);
    const auto C = frames_norm.dim(1);
    const auto H = frames_norm.dim(2), W = frames_norm.dim(3);
    const std::int64_t gh = (H + cfg_.patch - 1) / cfg_.patch;
    const std::int64_t gw = (W + cfg_.patch - 1) / cfg_.patch;
    const std::int64_t patch_in = cfg_.patch * cfg_.patch * C;
    auto key = std::make_tuple(T, H, W);
    auto it = patch_maps_.find(key);
    if (it == patch_maps_.end()) {
      auto map = std::make_shared<std::vector<std::int64_t>>(
          static_cast<std::size_t>(T * gh * gw * patch_in), -1);
      for (std::int64_t t = 0; t < T; ++t) {
        for (std::int64_t gy = 0; gy < gh; ++gy) {
          for (std::int64_t gx = 0; gx < gw; ++gx) {
            const std::int64_t row = (t * gh + gy) * gw + gx;
            for (std::int64_t c = 0; c < C; ++c) {
              for (std::int64_t py = 0; py < cfg_.patch; ++py) {
                for (std::int64_t px = 0; px < cfg_.patch; ++px) {
                  const std::int64_t y = gy * cfg_.patch + py;
                  const std::int64_t x = gx * cfg_.patch + px;
                  const std::int64_t dst =
                      row * patch_in +
                      (c * cfg_.patch + py) * cfg_.patch + px;
                  if (y < H && x < W) {
                    (*map)[static_cast<std::size_t>(dst)] =
                        ((t * C + c) * H + y) * W + x;
                  }
                }
              }
            }
          }
        }
      }
      it = patch_maps_.emplace(key, std::move(map)).first;
    }
    Tensor<S> patches =
        ops::remap(frames_norm, {T * gh * gw, patch_in}, it->second);
    Tensor<S> tokens = ops::dense(patches, patch_w_.tensor, patch_b_.tensor);
    return ops::layernorm_lastdim(tokens, patch_ng_.tensor, patch_nb_.tensor);
  }

  /// One pre-norm windowed attention + MLP block over [T*G, D] token rows.
  Tensor<S> window_block(const Tensor<S>& tokens, WindowBlockParams<S>& blk,
                         const WindowPlan& plan, std::int64_t frames) {
    Tensor<S> h =
        ops::layernorm_lastdim(tokens, blk.norm1_g.tensor, blk.norm1_b.tensor);
    Tensor<S> attn = window_attention(h, blk, plan, frames);
    Tensor<S> x = ops::add(tokens, attn);
    Tensor<S> h2 =
        ops::layernorm_lastdim(x, blk.norm2_g.tensor, blk.norm2_b.tensor);
    Tensor<S> m = ops::dense(h2, blk.fc1_w.tensor, blk.fc1_b.tensor);
    m = ops::relu(m);
    m = ops::dense(m, blk.fc2_w.tensor, blk.fc2_b.tensor);
    return ops::add(x, m);
  }

  /// Window-partitioned multi-head self-attention (the attention half of a
  /// block, exposed separately for the definitional tests).
  Tensor<S> window_attention(const Tensor<S>& tokens,
                             WindowBlockParams<S>& blk, const WindowPlan& plan,
                             std::int64_t frames) {
    const std::int64_t dim = blk.norm1_g.tensor.size();
    const std::int64_t w2 = plan.window * plan.window;
    const std::int64_t bw = frames * plan.n_windows;  // windows in the batch
    const std::int64_t heads = blk.heads;
    const std::int64_t dh = dim / heads;

    Tensor<S> windows =
        ops::gather_rows(tokens, {bw * w2, dim}, plan.partition, dim);
    Tensor<S> qkv = ops::dense(windows, blk.qkv_w.tensor, blk.qkv_b.tensor);

    // split heads: [bw*w2, 3*dim] -> q,k,v [bw*heads, w2, dh]
    const auto split = head_split_maps(bw, w2, heads, dh);
    Tensor<S> q = ops::remap(qkv, {bw * heads, w2, dh}, split[0]);
    Tensor<S> k = ops::remap(qkv, {bw * heads, w2, dh}, split[1]);
    Tensor<S> v = ops::remap(qkv, {bw * heads, w2, dh}, split[2]);

    Tensor<S> scores =
        ops::scale(ops::bmm_nt(q, k), S(1) / std::sqrt(static_cast<S>(dh)));
    if (!plan.mask.empty()) {
      scores = ops::add(scores, tiled_mask(plan, frames, heads));
    }
    Tensor<S> attn = ops::softmax_lastdim(scores);
    Tensor<S> ctx = ops::bmm_nn(attn, v);  // [bw*heads, w2, dh]

    // merge heads back to [bw*w2, dim]
    Tensor<S> merged = ops::remap(ctx, {bw * w2, dim},
                                  head_merge_map(bw, w2, heads, dh));
    Tensor<S> projected =
        ops::dense(merged, blk.proj_w.tensor, blk.proj_b.tensor);
    // back to token order, dropping padded positions
    return ops::gather_rows(projected, {frames * plan.grid_h * plan.grid_w,
                                        dim},
                            plan.reverse, dim);
  }

  /// Raw frames in, first-derivative trace out ([N-1] scalars).
  Tensor<S> forward(const Tensor<S>& clip, bool train) {
    require(clip.ndim() == 4, "forward_t: expects [N,C,H,W]");
    require(clip.dim(2) == cfg_.input_size && clip.dim(3) == cfg_.input_size,
            "forward_t: clip resolution does not match model config");
    require(clip.dim(0) >= 2, "forward_t: clip needs at least 2 frames");

    Tensor<S> x;
    if (cfg_.use_norm_module) {
      x = norm_.forward(clip, train);
    } else {
      x = take_frames_prefix(clip, clip.dim(0) - 1);
    }
    const std::int64_t frames = x.dim(0);
    std::int64_t gh = (x.dim(2) + cfg_.patch - 1) / cfg_.patch;
    std::int64_t gw = (x.dim(3) + cfg_.patch - 1) / cfg_.patch;
    Tensor<S> tokens = patch_embed(x);

    for (std::size_t s = 0; s < blocks_.size(); ++s) {
      const std::int64_t dim = cfg_.stage_dim(s);
      for (std::size_t b = 0; b < blocks_[s].size(); ++b) {
        if (cfg_.use_tsm) {
          tokens = ops::token_shift(tokens, frames, gh * gw, dim,
                                    cfg_.fold_div);
        }
        const bool shifted = (b % 2) == 1;  // blocks alternate regular/shifted
        const WindowPlan& plan = cached_plan(gh, gw, shifted, frames);
        tokens = window_block(tokens, blocks_[s][b], plan, frames);
      }
      if (s + 1 < blocks_.size()) {
        tokens = patch_merge(tokens, merges_[s], frames, gh, gw);
        gh = (gh + 1) / 2;
        gw = (gw + 1) / 2;
      }
    }

    // global average pool per frame, then the scalar head
    const std::int64_t final_dim = cfg_.stage_dim(blocks_.size() - 1);
    Tensor<S> pooled = ops::mean_axis1(tokens, frames, gh * gw, final_dim);
    Tensor<S> out = ops::dense(pooled, head_w_.tensor, head_b_.tensor);
    return out.reshaped({frames});
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> ps;
    if (cfg_.use_norm_module) {
      for (auto* p : norm_.parameters()) ps.push_back(p);
    }
    ps.push_back(&patch_w_);
    ps.push_back(&patch_b_);
    ps.push_back(&patch_ng_);
    ps.push_back(&patch_nb_);
    for (auto& stage : blocks_) {
      for (auto& blk : stage) {
        for (auto* p : blk.parameters()) ps.push_back(p);
      }
    }
    for (auto& m : merges_) {
      ps.push_back(&m.norm_g);
      ps.push_back(&m.norm_b);
      ps.push_back(&m.w);
      ps.push_back(&m.b);
    }
    ps.push_back(&head_w_);
    ps.push_back(&head_b_);
    return ps;
  }

  std::int64_t param_count() {
    std::int64_t n = 0;
    for (auto* p : parameters()) n += p->tensor.size();
    return n;
  }

  /// Analytic MACs per input frame (attention scored on the padded grids).
  static std::int64_t flop_count(const TransformerConfig& cfg) {
    std::int64_t gh = (cfg.input_size + cfg.patch - 1) / cfg.patch;
    std::int64_t gw = gh;
    const std::int64_t patch_in =
        static_cast<std::int64_t>(cfg.patch) * cfg.patch * cfg.in_channels;
    std::int64_t macs = gh * gw * patch_in * cfg.embed_dim;
    for (std::size_t s = 0; s < cfg.depths.size(); ++s) {
      const std::int64_t dim = cfg.stage_dim(s);
      const std::int64_t ph = (gh + cfg.window - 1) / cfg.window * cfg.window;
      const std::int64_t pw = (gw + cfg.window - 1) / cfg.window * cfg.window;
      const std::int64_t tokens = ph * pw;
      const std::int64_t w2 =
          static_cast<std::int64_t>(cfg.window) * cfg.window;
      const auto hidden = static_cast<std::int64_t>(
          std::lround(cfg.mlp_ratio * static_cast<double>(dim)));
      for (int b = 0; b < cfg.depths[s]; ++b) {
        macs += tokens * dim * 3 * dim;        // qkv
        macs += tokens * w2 * dim * 2;         // scores + context
        macs += tokens * dim * dim;            // proj
        macs += tokens * dim * hidden * 2;     // mlp
      }
      if (s + 1 < cfg.depths.size()) {
        const std::int64_t next_tokens = ((gh + 1) / 2) * ((gw + 1) / 2);
        macs += next_tokens * 4 * dim * cfg.stage_dim(s + 1);
        gh = (gh + 1) / 2;
        gw = (gw + 1) / 2;
      }
    }
    macs += cfg.stage_dim(cfg.depths.size() - 1);  // head
    return macs;
  }

  NormalizationModule<S>& norm() { return norm_; }
  WindowBlockParams<S>& block(std::size_t stage, std::size_t idx) {
    return blocks_[stage][idx];
  }

  ModelWeights save() const {
    ModelWeights w;
    w.config()["config_t"] = cfg_.to_json();
    if (cfg_.use_norm_module) norm_.save(w);
    auto* self = const_cast<EfficientPhysT*>(this);
    for (auto* p : self->parameters()) {
      if (p->name.rfind("norm.", 0) == 0) continue;  // saved by the module
      w.add_tensor(p->name, p->tensor);
    }
    return w;
  }

  static EfficientPhysT load(const ModelWeights& w) {
    require(w.config().contains("config_t"),
            "weights file carries no transformer config");
    TransformerConfig cfg =
        TransformerConfig::from_json(w.config()["config_t"]);
    EfficientPhysT m(cfg, /*seed=*/0);
    if (cfg.use_norm_module) m.norm_.load(w);
    for (auto* p : m.parameters()) {
      p->tensor = w.tensor<S>(p->name).set_requires_grad(true);
    }
    return m;
  }

 private:
  struct MergeParams {
    Parameter<S> norm_g, norm_b, w, b;
  };

  static Parameter<S> make_dense(const std::string& name, std::int64_t fin,
                                 std::int64_t fout, RngStream rng) {
    Tensor<S> t = Tensor<S>::zeros({fin, fout});
    for (std::int64_t i = 0; i < t.size(); ++i) {
      t.mutable_data()[i] = static_cast<S>(rng.truncated_normal(0.0, 0.02));
    }
    return Parameter<S>(name, t);
  }

  const WindowPlan& cached_plan(std::int64_t gh, std::int64_t gw, bool shifted,
                                std::int64_t frames) {
    const auto key = std::make_tuple(gh, gw, shifted, frames);
    auto it = plans_.find(key);
    if (it == plans_.end()) {
      it = plans_
               .emplace(key, build_window_plan(gh, gw, cfg_.window, shifted,
                                               frames))
               .first;
    }
    return it->second;
  }

  /// q/k/v extraction maps: output [bw*heads, w2, dh] from qkv [bw*w2, 3*dim].
  std::array<std::shared_ptr<std::vector<std::int64_t>>, 3> head_split_maps(
      std::int64_t bw, std::int64_t w2, std::int64_t heads, std::int64_t dh) {
    const auto key = std::make_tuple(bw, w2, heads, dh);
    auto it = split_maps_.find(key);
    if (it == split_maps_.end()) {
      const std::int64_t dim = heads * dh;
      std::array<std::shared_ptr<std::vector<std::int64_t>>, 3> maps;
      for (int part = 0; part < 3; ++part) {
        maps[static_cast<std::size_t>(part)] =
            std::make_shared<std::vector<std::int64_t>>(
                static_cast<std::size_t>(bw * heads * w2 * dh));
      }
      for (std::int64_t b = 0; b < bw; ++b) {
        for (std::int64_t h = 0; h < heads; ++h) {
          for (std::int64_t i = 0; i < w2; ++i) {
            for (std::int64_t d = 0; d < dh; ++d) {
              const std::int64_t dst = (((b * heads + h) * w2) + i) * dh + d;
              for (std::int64_t part = 0; part < 3; ++part) {
                (*maps[static_cast<std::size_t>(part)])
                    [static_cast<std::size_t>(dst)] =
                        (b * w2 + i) * 3 * dim + part * dim + h * dh + d;
              }
            }
          }
        }
      }
      it = split_maps_.emplace(key, std::move(maps)).first;
    }
    return it->second;
  }

  /// inverse of the head split for the context tensor
  std::shared_ptr<std::vector<std::int64_t>> head_merge_map(std::int64_t bw,
                                                            std::int64_t w2,
                                                            std::int64_t heads,
                                                            std::int64_t dh) {
    const auto key = std::make_tuple(bw, w2, heads, dh);
    auto it = merge_maps_.find(key);
    if (it == merge_maps_.end()) {
      auto map = std::make_shared<std::vector<std::int64_t>>(
          static_cast<std::size_t>(bw * w2 * heads * dh));
      for (std::int64_t b = 0; b < bw; ++b) {
        for (std::int64_t i = 0; i < w2; ++i) {
          for (std::int64_t h = 0; h < heads; ++h) {
            for (std::int64_t d = 0; d < dh; ++d) {
              (*map)[static_cast<std::size_t>((b * w2 + i) * heads * dh +
                                              h * dh + d)] =
                  (((b * heads + h) * w2) + i) * dh + d;
            }
          }
        }
      }
      it = merge_maps_.emplace(key, std::move(map)).first;
    }
    return it->second;
  }

  Tensor<S> tiled_mask(const WindowPlan& plan, std::int64_t frames,
                       std::int64_t heads) {
    const auto key = std::make_tuple(plan.grid_h, plan.grid_w, plan.shifted,
                                     frames, heads);
    auto it = masks_.find(key);
    if (it == masks_.end()) {
      const std::int64_t w2 = plan.window * plan.window;
      Tensor<S> m =
          Tensor<S>::zeros({frames * plan.n_windows * heads, w2, w2});
      S* p = m.mutable_data();
      for (std::int64_t t = 0; t < frames; ++t) {
        for (std::int64_t w = 0; w < plan.n_windows; ++w) {
          for (std::int64_t h = 0; h < heads; ++h) {
            for (std::int64_t i = 0; i < w2 * w2; ++i) {
              *p++ = static_cast<S>(
                  plan.mask[static_cast<std::size_t>(w * w2 * w2 + i)]);
            }
          }
        }
      }
      it = masks_.emplace(key, std::move(m)).first;
    }
    return it->second;
  }

  /// 2x2 token concatenation (zero-padded at odd edges), layer norm, linear
  /// projection to double width.
  Tensor<S> patch_merge(const Tensor<S>& tokens, MergeParams& mp,
                        std::int64_t frames, std::int64_t gh,
                        std::int64_t gw) {
    const std::int64_t dim = mp.norm_g.tensor.size() / 4;
    const std::int64_t oh = (gh + 1) / 2, ow = (gw + 1) / 2;
    const auto key = std::make_tuple(frames, gh, gw);
    auto it = merge_gather_.find(key);
    if (it == merge_gather_.end()) {
      auto map = std::make_shared<std::vector<std::int64_t>>(
          static_cast<std::size_t>(frames * oh * ow * 4 * dim), -1);
      for (std::int64_t t = 0; t < frames; ++t) {
        for (std::int64_t y = 0; y < oh; ++y) {
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t row = (t * oh + y) * ow + x;
            const std::int64_t quads[4][2] = {
                {2 * y, 2 * x}, {2 * y + 1, 2 * x},
                {2 * y, 2 * x + 1}, {2 * y + 1, 2 * x + 1}};
            for (int q = 0; q < 4; ++q) {
              const std::int64_t sy = quads[q][0], sx = quads[q][1];
              if (sy >= gh || sx >= gw) continue;  // zero pad
              const std::int64_t src_row = (t * gh + sy) * gw + sx;
              for (std::int64_t d = 0; d < dim; ++d) {
                (*map)[static_cast<std::size_t>(row * 4 * dim + q * dim + d)] =
                    src_row * dim + d;
              }
            }
          }
        }
      }
      it = merge_gather_.emplace(key, std::move(map)).first;
    }
    Tensor<S> cat =
        ops::remap(tokens, {frames * oh * ow, 4 * dim}, it->second);
    Tensor<S> n =
        ops::layernorm_lastdim(cat, mp.norm_g.tensor, mp.norm_b.tensor);
    return ops::dense(n, mp.w.tensor, mp.b.tensor);
  }

  TransformerConfig cfg_;
  NormalizationModule<S> norm_;
  Parameter<S> patch_w_, patch_b_, patch_ng_, patch_nb_;
  std::vector<std::vector<WindowBlockParams<S>>> blocks_;
  std::vector<MergeParams> merges_;
  Parameter<S> head_w_, head_b_;

  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>,
           std::shared_ptr<std::vector<std::int64_t>>>
      patch_maps_;
  std::map<std::tuple<std::int64_t, std::int64_t, bool, std::int64_t>,
           WindowPlan>
      plans_;
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t>,
           std::array<std::shared_ptr<std::vector<std::int64_t>>, 3>>
      split_maps_;
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t>,
           std::shared_ptr<std::vector<std::int64_t>>>
      merge_maps_;
  std::map<std::tuple<std::int64_t, std::int64_t, bool, std::int64_t,
                      std::int64_t>,
           Tensor<S>>
      masks_;
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>,
           std::shared_ptr<std::vector<std::int64_t>>>
      merge_gather_;
};

}  // namespace pulseforge
