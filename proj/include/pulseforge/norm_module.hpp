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

#include <vector>

#include "pulseforge/conv.hpp"
#include "pulseforge/ops.hpp"
#include "pulseforge/tensor.hpp"
#include "pulseforge/weights.hpp"

namespace pulseforge {

/// First forward differences of a clip along time.
template <typename S>
struct DiffFrames {
  Tensor<S> tensor;          // [N-1,C,H,W]
  std::int64_t source_len;   // N
};

/// out[n] = clip[n+1] - clip[n]. Kills any static image component.
template <typename S>
DiffFrames<S> frame_diff(const Tensor<S>& clip) {
  require(clip.ndim() == 4, "frame_diff: expects [N,C,H,W]");
  const auto N = clip.dim(0);
  require(N >= 2, "frame_diff: clip needs at least 2 frames");
  const auto per = clip.size() / N;
  Shape out_shape = clip.shape();
  out_shape[0] = N - 1;
  Tensor<S> y = Tensor<S>::zeros(out_shape);
  Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> next(
      clip.data() + per, (N - 1) * per);
  Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> prev(clip.data(),
                                                            (N - 1) * per);
  y.mutable_array() = next - prev;
  auto xn = clip.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, N, per] {
        if (!(xn->requires_grad || xn->on_tape)) return;
        xn->ensure_grad();
        Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> g_hi(
            xn->grad.data() + per, (N - 1) * per);
        Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> g_lo(xn->grad.data(),
                                                            (N - 1) * per);
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> g(
            yn->grad.data(), (N - 1) * per);
        g_hi += g;
        g_lo -= g;
      },
      clip);
  return {y, N};
}

/// The preprocessing-replacing input head: temporal difference followed by
/// learnable batch normalization. At init (gamma=1, beta=0) the train-mode
/// output is per-channel zero-mean unit-variance.
template <typename S>
class NormalizationModule {
 public:
  NormalizationModule() = default;
  explicit NormalizationModule(std::int64_t channels, S momentum = S(0.1),
                               S eps = S(1e-5))
      : momentum_(momentum), eps_(eps) {
    gamma_ = Parameter<S>("norm.gamma",
                          Tensor<S>::full({channels}, S(1)));
    beta_ = Parameter<S>("norm.beta", Tensor<S>::zeros({channels}));
    running_mean_.assign(static_cast<std::size_t>(channels), S(0));
    running_var_.assign(static_cast<std::size_t>(channels), S(1));
  }

  Tensor<S> forward(const Tensor<S>& clip, bool train) {
    DiffFrames<S> d = frame_diff(clip);
    return ops::batchnorm2d(d.tensor, gamma_.tensor, beta_.tensor,
                            running_mean_, running_var_, train, momentum_,
                            eps_);
  }

  std::vector<Parameter<S>*> parameters() { return {&gamma_, &beta_}; }

  void save(ModelWeights& w) const {
    w.add_tensor(gamma_.name, gamma_.tensor);
    w.add_tensor(beta_.name, beta_.tensor);
    w.add_vector("norm.running_mean", running_mean_);
    w.add_vector("norm.running_var", running_var_);
  }

  void load(const ModelWeights& w) {
    gamma_.tensor = w.tensor<S>(gamma_.name).set_requires_grad(true);
    beta_.tensor = w.tensor<S>(beta_.name).set_requires_grad(true);
    running_mean_ = w.values<S>("norm.running_mean");
    running_var_ = w.values<S>("norm.running_var");
  }

  Parameter<S>& gamma() { return gamma_; }
  Parameter<S>& beta() { return beta_; }

 private:
  Parameter<S> gamma_, beta_;
  std::vector<S> running_mean_, running_var_;
  S momentum_ = S(0.1);
  S eps_ = S(1e-5);
};

/// Convenience free function matching the module contract.
template <typename S>
Tensor<S> normalization_module(const Tensor<S>& clip,
                               NormalizationModule<S>& module, bool train) {
  return module.forward(clip, train);
}

/// First `count` frames of a clip; used by the no-normalization ablation so
/// raw-frame inputs still line up with N-1 difference targets.
template <typename S>
Tensor<S> take_frames_prefix(const Tensor<S>& clip, std::int64_t count) {
  const auto n = clip.dim(0);
  require(count >= 1 && count <= n, "take_frames_prefix: bad count");
  const auto per = clip.size() / n;
  Shape shape = clip.shape();
  shape[0] = count;
  auto map = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(count * per));
  for (std::int64_t i = 0; i < count * per; ++i) (*map)[i] = i;
  return ops::remap(clip, shape, map);
}

}  // namespace pulseforge
