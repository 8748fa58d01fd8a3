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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulseforge/norm_module.hpp"
#include "pulseforge/rng.hpp"

namespace pulseforge {

/// Configuration for EfficientPhys-C. The ablation switches exist for the
/// study harness; the defaults are the full model.
struct ConvModelConfig {
  int input_size = 36;        // H = W
  int frames_per_window = 21;
  std::array<int, 2> conv_filters{32, 64};
  int kernel = 3;
  std::array<double, 3> dropout_rates{0.25, 0.25, 0.5};
  int dense_hidden = 128;
  int fold_div = 3;
  int in_channels = 3;
  bool use_norm_module = true;
  bool use_attention = true;
  bool use_tsm = true;

  void validate() const {
    require(input_size >= 8, "conv config: input_size must be >= 8");
    require(frames_per_window >= 2, "conv config: window needs >= 2 frames");
    require(conv_filters[0] > 0 && conv_filters[1] > 0,
            "conv config: filters must be positive");
    require(kernel % 2 == 1, "conv config: kernel must be odd");
    require(input_size % 4 == 0,
            "conv config: input_size must survive two 2x2 pools");
  }

  nlohmann::json to_json() const {
    return {{"input_size", input_size},
            {"frames_per_window", frames_per_window},
            {"conv_filters", conv_filters},
            {"kernel", kernel},
            {"dropout", dropout_rates},
            {"dense_hidden", dense_hidden},
            {"fold_div", fold_div},
            {"in_channels", in_channels},
            {"use_norm_module", use_norm_module},
            {"use_attention", use_attention},
            {"use_tsm", use_tsm}};
  }

  static ConvModelConfig from_json(const nlohmann::json& j) {
    ConvModelConfig c;
    c.input_size = j.value("input_size", c.input_size);
    c.frames_per_window = j.value("frames_per_window", c.frames_per_window);
    if (j.contains("conv_filters")) {
      c.conv_filters[0] = j["conv_filters"][0];
      c.conv_filters[1] = j["conv_filters"][1];
    }
    c.kernel = j.value("kernel", c.kernel);
    if (j.contains("dropout")) {
      for (int i = 0; i < 3; ++i) c.dropout_rates[i] = j["dropout"][i];
    }
    c.dense_hidden = j.value("dense_hidden", c.dense_hidden);
    c.fold_div = j.value("fold_div", c.fold_div);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.use_norm_module = j.value("use_norm_module", c.use_norm_module);
    c.use_attention = j.value("use_attention", c.use_attention);
    c.use_tsm = j.value("use_tsm", c.use_tsm);
    c.validate();
    return c;
  }
};

/// k x k cross-correlation cost in multiply-accumulates for one frame.
inline std::int64_t conv2d_macs(std::int64_t k, std::int64_t cin,
                                std::int64_t cout, std::int64_t ho,
                                std::int64_t wo) {
  return k * k * cin * cout * ho * wo;
}

/// Softmax-free self-attention mask: sigmoid of a 1x1 convolution,
/// L1-normalized per frame and rescaled so the spatial sum is H*W/2.
template <typename S>
Tensor<S> attention_mask(const Tensor<S>& x, const Tensor<S>& w1x1,
                         const Tensor<S>& b) {
  Tensor<S> s = ops::sigmoid(ops::conv2d(x, w1x1, b, ops::Padding::kSame));
  const S scale = static_cast<S>(x.dim(2) * x.dim(3)) / S(2);
  return ops::frame_l1_normalize(s, scale);
}

/// EfficientPhys-C: single-branch self-attention-shifted network mapping raw
/// frames to a first-derivative PPG trace of length N-1.
template <typename S>
class EfficientPhysC {
 public:
  EfficientPhysC() = default;

  EfficientPhysC(const ConvModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    RngStream root(seed);
    norm_ = NormalizationModule<S>(cfg_.in_channels);
    const int f0 = cfg_.conv_filters[0], f1 = cfg_.conv_filters[1];
    const int k = cfg_.kernel;
    conv_w_[0] = make_conv("conv1.weight", f0, cfg_.in_channels, k,
                           root.fork(1));
    conv_b_[0] = Parameter<S>("conv1.bias", Tensor<S>::zeros({f0}));
    conv_w_[1] = make_conv("conv2.weight", f0, f0, k, root.fork(2));
    conv_b_[1] = Parameter<S>("conv2.bias", Tensor<S>::zeros({f0}));
    conv_w_[2] = make_conv("conv3.weight", f1, f0, k, root.fork(3));
    conv_b_[2] = Parameter<S>("conv3.bias", Tensor<S>::zeros({f1}));
    conv_w_[3] = make_conv("conv4.weight", f1, f1, k, root.fork(4));
    conv_b_[3] = Parameter<S>("conv4.bias", Tensor<S>::zeros({f1}));
    attn_w_[0] = make_attn("attn1.weight", f0, root.fork(5));
    attn_b_[0] = Parameter<S>("attn1.bias", Tensor<S>::zeros({1}));
    attn_w_[1] = make_attn("attn2.weight", f1, root.fork(6));
    attn_b_[1] = Parameter<S>("attn2.bias", Tensor<S>::zeros({1}));
    const std::int64_t flat = flattened_features();
    dense_w_ = make_dense("head.dense.weight", flat, cfg_.dense_hidden,
                          root.fork(7));
    dense_b_ = Parameter<S>("head.dense.bias",
                            Tensor<S>::zeros({cfg_.dense_hidden}));
    out_w_ = make_dense("head.out.weight", cfg_.dense_hidden, 1, root.fork(8));
    out_b_ = Parameter<S>("head.out.bias", Tensor<S>::zeros({1}));
    dropout_rng_ = root.fork(9);
  }

  const ConvModelConfig& config() const { return cfg_; }

  std::int64_t flattened_features() const {
    const std::int64_t side = cfg_.input_size / 4;  // two 2x2 pools
    return cfg_.conv_filters[1] * side * side;
  }

  /// Raw frames in, first-derivative trace out ([N-1] scalars).
  Tensor<S> forward(const Tensor<S>& clip, bool train) {
    require(clip.ndim() == 4, "forward: expects [N,C,H,W]");
    require(clip.dim(2) == cfg_.input_size && clip.dim(3) == cfg_.input_size,
            "forward: clip resolution does not match model config");
    require(clip.dim(1) == cfg_.in_channels,
            "forward: channel count mismatch");
    require(clip.dim(0) >= 2, "forward: clip needs at least 2 frames");

    RngStream drop = dropout_rng_.fork(forward_calls_++);
    RngStream d1 = drop.fork(1), d2 = drop.fork(2), d3 = drop.fork(3);

    Tensor<S> x;
    if (cfg_.use_norm_module) {
      x = norm_.forward(clip, train);
    } else {
      // Ablation: raw frames straight to the conv stack; drop the last frame
      // so the trace stays aligned with the N-1 difference targets.
      x = take_frames_prefix(clip, clip.dim(0) - 1);
    }
    x = ts_conv(x, 0);
    x = ts_conv(x, 1);
    if (cfg_.use_attention) {
      x = ops::mul_mask(
          x, attention_mask(x, attn_w_[0].tensor, attn_b_[0].tensor));
    }
    x = ops::avgpool2d(x);
    x = ops::dropout(x, cfg_.dropout_rates[0], d1, train);
    x = ts_conv(x, 2);
    x = ts_conv(x, 3);
    if (cfg_.use_attention) {
      x = ops::mul_mask(
          x, attention_mask(x, attn_w_[1].tensor, attn_b_[1].tensor));
    }
    x = ops::avgpool2d(x);
    x = ops::dropout(x, cfg_.dropout_rates[1], d2, train);
    const auto frames = x.dim(0);
    x = x.reshaped({frames, flattened_features()});
    x = ops::tanh(ops::dense(x, dense_w_.tensor, dense_b_.tensor));
    x = ops::dropout(x, cfg_.dropout_rates[2], d3, train);
    x = ops::dense(x, out_w_.tensor, out_b_.tensor);
    return x.reshaped({frames});
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> ps;
    if (cfg_.use_norm_module) {
      for (auto* p : norm_.parameters()) ps.push_back(p);
    }
    for (int i = 0; i < 4; ++i) {
      ps.push_back(&conv_w_[i]);
      ps.push_back(&conv_b_[i]);
    }
    if (cfg_.use_attention) {
      for (int i = 0; i < 2; ++i) {
        ps.push_back(&attn_w_[i]);
        ps.push_back(&attn_b_[i]);
      }
    }
    ps.push_back(&dense_w_);
    ps.push_back(&dense_b_);
    ps.push_back(&out_w_);
    ps.push_back(&out_b_);
    return ps;
  }

  std::int64_t param_count() {
    std::int64_t n = 0;
    for (auto* p : parameters()) n += p->tensor.size();
    return n;
  }

  /// Analytic multiply-accumulate count per input frame.
  static std::int64_t flop_count(const ConvModelConfig& cfg) {
    const std::int64_t k = cfg.kernel;
    const std::int64_t s = cfg.input_size;
    const std::int64_t f0 = cfg.conv_filters[0], f1 = cfg.conv_filters[1];
    std::int64_t macs = 0;
    macs += conv2d_macs(k, cfg.in_channels, f0, s, s);  // conv1
    macs += conv2d_macs(k, f0, f0, s, s);               // conv2
    if (cfg.use_attention) macs += conv2d_macs(1, f0, 1, s, s);
    const std::int64_t s2 = s / 2;
    macs += conv2d_macs(k, f0, f1, s2, s2);             // conv3
    macs += conv2d_macs(k, f1, f1, s2, s2);             // conv4
    if (cfg.use_attention) macs += conv2d_macs(1, f1, 1, s2, s2);
    const std::int64_t s4 = s / 4;
    macs += f1 * s4 * s4 * cfg.dense_hidden;            // per-frame dense
    macs += cfg.dense_hidden;                           // readout
    return macs;
  }

  NormalizationModule<S>& norm() { return norm_; }
  Parameter<S>& attn_weight(int i) { return attn_w_[i]; }
  Parameter<S>& attn_bias(int i) { return attn_b_[i]; }

  ModelWeights save() const {
    ModelWeights w;
    w.config()["config"] = cfg_.to_json();
    if (cfg_.use_norm_module) norm_.save(w);
    for (int i = 0; i < 4; ++i) {
      w.add_tensor(conv_w_[i].name, conv_w_[i].tensor);
      w.add_tensor(conv_b_[i].name, conv_b_[i].tensor);
    }
    if (cfg_.use_attention) {
      for (int i = 0; i < 2; ++i) {
        w.add_tensor(attn_w_[i].name, attn_w_[i].tensor);
        w.add_tensor(attn_b_[i].name, attn_b_[i].tensor);
      }
    }
    w.add_tensor(dense_w_.name, dense_w_.tensor);
    w.add_tensor(dense_b_.name, dense_b_.tensor);
    w.add_tensor(out_w_.name, out_w_.tensor);
    w.add_tensor(out_b_.name, out_b_.tensor);
    return w;
  }

  static EfficientPhysC load(const ModelWeights& w) {
    require(w.config().contains("config"),
            "weights file carries no conv model config");
    ConvModelConfig cfg = ConvModelConfig::from_json(w.config()["config"]);
    EfficientPhysC m(cfg, /*seed=*/0);
    if (cfg.use_norm_module) m.norm_.load(w);
    for (auto* p : m.parameters()) {
      p->tensor = w.tensor<S>(p->name).set_requires_grad(true);
    }
    return m;
  }

 private:
  static Parameter<S> make_conv(const std::string& name, int cout, int cin,
                                int k, RngStream rng) {
    // Kaiming-uniform over fan-in.
    const double bound = std::sqrt(6.0 / (cin * k * k));
    Tensor<S> t = Tensor<S>::zeros({cout, cin, k, k});
    for (std::int64_t i = 0; i < t.size(); ++i) {
      t.mutable_data()[i] = static_cast<S>(rng.uniform(-bound, bound));
    }
    return Parameter<S>(name, t);
  }

  static Parameter<S> make_attn(const std::string& name, int cin,
                                RngStream rng) {
    Tensor<S> t = Tensor<S>::zeros({1, cin, 1, 1});
    for (std::int64_t i = 0; i < t.size(); ++i) {
      t.mutable_data()[i] = static_cast<S>(rng.truncated_normal(0.0, 0.02));
    }
    return Parameter<S>(name, t);
  }

  static Parameter<S> make_dense(const std::string& name, std::int64_t fin,
                                 std::int64_t fout, RngStream rng) {
    Tensor<S> t = Tensor<S>::zeros({fin, fout});
    for (std::int64_t i = 0; i < t.size(); ++i) {
      t.mutable_data()[i] = static_cast<S>(rng.truncated_normal(0.0, 0.02));
    }
    return Parameter<S>(name, t);
  }

  Tensor<S> ts_conv(const Tensor<S>& x, int layer) {
    Tensor<S> h = cfg_.use_tsm ? ops::tensor_shift(x, cfg_.fold_div) : x;
    h = ops::conv2d(h, conv_w_[layer].tensor, conv_b_[layer].tensor,
                    ops::Padding::kSame);
    return ops::tanh(h);
  }


  ConvModelConfig cfg_;
  NormalizationModule<S> norm_;
  std::array<Parameter<S>, 4> conv_w_, conv_b_;
  std::array<Parameter<S>, 2> attn_w_, attn_b_;
  Parameter<S> dense_w_, dense_b_, out_w_, out_b_;
  RngStream dropout_rng_;
  std::uint64_t forward_calls_ = 0;
};

}  // namespace pulseforge
