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

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pulseforge/dataio.hpp"
#include "pulseforge/ops.hpp"
#include "pulseforge/rng.hpp"
#include "pulseforge/signal.hpp"
#include "pulseforge/tensor.hpp"
#include "pulseforge/weights.hpp"

namespace pulseforge {

enum class LossKind { kNegPearson, kMse };
enum class ModelKind { kConv, kT1, kT2 };

/// Training protocol: AdamW, per-model learning rate and loss, five epochs,
/// everything derived from one seed.
struct TrainConfig {
  ModelKind model = ModelKind::kConv;
  double lr = 0.001;  // 0.0001 for the transformer models
  int epochs = 5;
  int batch_windows = 4;
  double weight_decay = 0.01;
  LossKind loss = LossKind::kNegPearson;  // mse for the transformer models
  std::uint64_t seed = 0;
  std::int64_t window_stride = 0;  // 0: stride = window length

  static TrainConfig defaults_for(ModelKind m) {
    TrainConfig c;
    c.model = m;
    if (m != ModelKind::kConv) {
      c.lr = 0.0001;
      c.loss = LossKind::kMse;
    }
    return c;
  }
};

/// Mean over batch rows of 1 - Pearson(pred_row, target_row). Row sigma is
/// guarded by eps, so a constant row contributes a loss near 1 instead of a
/// division by zero. Invariant to positive affine transforms of pred.
template <typename S>
Tensor<S> neg_pearson_loss(const Tensor<S>& pred, const Tensor<S>& target,
                           S eps = S(1e-8)) {
  require(pred.shape() == target.shape() && pred.ndim() == 2,
          "neg_pearson_loss: expects matching [B,L] tensors");
  const auto B = pred.dim(0), L = pred.dim(1);
  require(L >= 2, "neg_pearson_loss: rows need at least 2 samples");

  // cache per-row centered values and moment sums for the backward pass
  auto centered_p = std::make_shared<AlignedVec<S>>(
      static_cast<std::size_t>(pred.size()));
  auto centered_t = std::make_shared<AlignedVec<S>>(
      static_cast<std::size_t>(pred.size()));
  auto row_stats = std::make_shared<std::vector<S>>(
      static_cast<std::size_t>(3 * B));  // spt, spp, stt per row

  S loss = 0;
  for (std::int64_t r = 0; r < B; ++r) {
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> p(pred.data() + r * L,
                                                           L);
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> t(
        target.data() + r * L, L);
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> cp(
        centered_p->data() + r * L, L);
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> ct(
        centered_t->data() + r * L, L);
    cp = p - p.mean();
    ct = t - t.mean();
    const S spt = (cp * ct).sum();
    const S spp = (cp * cp).sum() + eps;
    const S stt = (ct * ct).sum() + eps;
    (*row_stats)[static_cast<std::size_t>(3 * r)] = spt;
    (*row_stats)[static_cast<std::size_t>(3 * r + 1)] = spp;
    (*row_stats)[static_cast<std::size_t>(3 * r + 2)] = stt;
    loss += S(1) - spt / std::sqrt(spp * stt);
  }
  loss /= static_cast<S>(B);

  Tensor<S> out = Tensor<S>::scalar(loss);
  auto pn = pred.node(), yn = out.node();
  pulseforge::detail::record_op(
      out,
      [pn, yn, centered_p, centered_t, row_stats, B, L] {
        if (!(pn->requires_grad || pn->on_tape)) return;
        pn->ensure_grad();
        const S g = yn->grad[0] / static_cast<S>(B);
        for (std::int64_t r = 0; r < B; ++r) {
          const S spt = (*row_stats)[static_cast<std::size_t>(3 * r)];
          const S spp = (*row_stats)[static_cast<std::size_t>(3 * r + 1)];
          const S stt = (*row_stats)[static_cast<std::size_t>(3 * r + 2)];
          const S denom = std::sqrt(spp * stt);
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> cp(
              centered_p->data() + r * L, L);
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> ct(
              centered_t->data() + r * L, L);
          Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> gp(
              pn->grad.data() + r * L, L);
          // d(1-rho)/dp = -(ct/denom - rho * cp/spp); mean-centering terms
          // vanish because both centered rows sum to zero
          gp += g * (spt / spp * cp - ct) / denom;
        }
      },
      pred);
  return out;
}

/// Mean squared difference over all elements.
template <typename S>
Tensor<S> mse_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  require(pred.shape() == target.shape(), "mse_loss: shape mismatch");
  const auto n = pred.size();
  Tensor<S> out = Tensor<S>::scalar(
      ((pred.array() - target.array()).square().sum()) / static_cast<S>(n));
  auto pn = pred.node(), tn = target.node(), yn = out.node();
  pulseforge::detail::record_op(
      out,
      [pn, tn, yn, n] {
        if (!(pn->requires_grad || pn->on_tape)) return;
        pn->ensure_grad();
        const S g = yn->grad[0] * S(2) / static_cast<S>(n);
        pulseforge::detail::grad_map(pn) +=
            g * (pulseforge::detail::value_map(pn) -
                 pulseforge::detail::value_map(tn));
      },
      pred);
  return out;
}

/// Decoupled-weight-decay Adam. With weight_decay = 0 this is exactly Adam.
template <typename S>
class AdamW {
 public:
  explicit AdamW(std::vector<Parameter<S>*> params, double lr,
                 double weight_decay = 0.01, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)),
        lr_(lr),
        wd_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<std::size_t>(params_[i]->tensor.size()), 0.0);
      v_[i].assign(static_cast<std::size_t>(params_[i]->tensor.size()), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<S>& p = params_[i]->tensor;
      const bool has_grad = p.has_grad();
      for (std::int64_t j = 0; j < p.size(); ++j) {
        const double g =
            has_grad ? static_cast<double>(
                           p.grad()[static_cast<std::size_t>(j)])
                     : 0.0;
        double& m = m_[i][static_cast<std::size_t>(j)];
        double& v = v_[i][static_cast<std::size_t>(j)];
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g * g;
        const double mh = m / bc1;
        const double vh = v / bc2;
        double theta = static_cast<double>(p.data()[j]);
        theta -= lr_ * wd_ * theta;  // decoupled decay
        theta -= lr_ * mh / (std::sqrt(vh) + eps_);
        p.mutable_data()[j] = static_cast<S>(theta);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->tensor.zero_grad();
  }

  std::int64_t steps() const { return t_; }

 private:
  std::vector<Parameter<S>*> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, wd_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
};

template <typename Model>
struct FitResult {
  Model model;
  std::vector<EpochLog> log;
};

/// Standardize one predicted window so per-window output scales agree before
/// concatenation (negative-Pearson training leaves the scale free).
inline void standardize_window(std::vector<double>& w) {
  double mean = 0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  double var = 0;
  for (double v : w) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(w.size()));
  for (double& v : w) v = (v - mean) / (sd + 1e-8);
}

/// Non-overlapping windows through the model in eval mode, standardized and
/// concatenated into one derivative trace for the whole clip.
template <typename Model, typename S = float>
PulseTrace predict_trace(Model& model, const LabeledClip& clip,
                         std::int64_t window, std::int64_t input_size) {
  // stride window-1 so consecutive difference windows tile seamlessly
  auto ws = make_windows<S>(clip, window, window - 1, input_size);
  require(!ws.empty(), "predict_trace: clip shorter than one window");
  PulseTrace trace;
  trace.fps = clip.clip.fps;
  trace.kind = PulseTrace::Kind::kDerivative;
  for (std::int64_t k = 0; k < ws.size(); ++k) {
    Tensor<S> pred = model.forward(ws.frames(k), /*train=*/false);
    std::vector<double> w(static_cast<std::size_t>(pred.size()));
    for (std::int64_t i = 0; i < pred.size(); ++i) {
      w[static_cast<std::size_t>(i)] = static_cast<double>(pred[i]);
    }
    standardize_window(w);
    trace.samples.insert(trace.samples.end(), w.begin(), w.end());
  }
  return trace;
}

/// Validation HR error: band-pass + spectral argmax per clip against the
/// generator's exact ground truth. A trace with no usable spectrum counts
/// as a zero-BPM estimate rather than aborting the run.
template <typename Model, typename S = float>
double validation_mae(Model& model, const std::vector<LabeledClip>& clips,
                      std::int64_t window, std::int64_t input_size) {
  require(!clips.empty(), "validation_mae: empty validation split");
  double total = 0.0;
  for (const auto& clip : clips) {
    double est = 0.0;
    try {
      PulseTrace trace = predict_trace<Model, S>(model, clip, window,
                                                 input_size);
      est = hr_fft(bandpass(trace));
    } catch (const UndefinedHrError&) {
      est = 0.0;
    }
    total += std::abs(est - clip.hr_gt);
  }
  return total / static_cast<double>(clips.size());
}

/// Deterministic training loop. Gradients accumulate over batch_windows
/// windows per optimizer step; shuffling, dropout and init all derive from
/// config.seed. Aborts with diagnostics if the loss goes non-finite.
template <typename Model, typename S = float>
FitResult<Model> fit(Model model, const TrainConfig& cfg,
                     const std::vector<LabeledClip>& train_clips,
                     const std::vector<LabeledClip>& val_clips,
                     std::ostream* progress = nullptr) {
  require(!train_clips.empty(), "fit: empty training split");
  require(cfg.epochs >= 1 && cfg.lr > 0, "fit: invalid epochs or lr");

  const std::int64_t window = model.config().frames_per_window;
  const std::int64_t input_size = model.config().input_size;
  const std::int64_t stride =
      cfg.window_stride > 0 ? cfg.window_stride : window;

  std::vector<WindowSet<S>> sets;
  std::vector<std::pair<std::int64_t, std::int64_t>> order;  // (clip, window)
  sets.reserve(train_clips.size());
  for (std::size_t c = 0; c < train_clips.size(); ++c) {
    sets.push_back(make_windows<S>(train_clips[c], window, stride,
                                   input_size));
    for (std::int64_t k = 0; k < sets.back().size(); ++k) {
      order.emplace_back(static_cast<std::int64_t>(c), k);
    }
  }
  require(!order.empty(), "fit: no training windows (clips too short)");

  FitResult<Model> result{std::move(model), {}};
  // parameter pointers must reference the model in its final location
  AdamW<S> opt(result.model.parameters(), cfg.lr, cfg.weight_decay);
  RngStream shuffle_rng = RngStream(cfg.seed).fork(0xD5);
  const S inv_batch = S(1) / static_cast<S>(cfg.batch_windows);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // seeded Fisher-Yates
    RngStream er = shuffle_rng.fork(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(er.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::int64_t in_batch = 0;
    opt.zero_grad();
    for (std::size_t w = 0; w < order.size(); ++w) {
      const auto [ci, ki] = order[w];
      Tensor<S> frames = sets[static_cast<std::size_t>(ci)].frames(ki);
      const std::vector<float> target32 = label_preprocess(
          sets[static_cast<std::size_t>(ci)].labels(ki));
      std::vector<S> target(target32.begin(), target32.end());

      Tape<S> tape;
      double window_loss;
      {
        typename Tape<S>::Scope scope(tape);
        Tensor<S> pred = result.model.forward(frames, /*train=*/true);
        Tensor<S> pred_row = pred.reshaped({1, pred.size()});
        Tensor<S> target_row = Tensor<S>::from_data(
            {1, static_cast<std::int64_t>(target.size())}, target);
        Tensor<S> loss = cfg.loss == LossKind::kNegPearson
                             ? neg_pearson_loss(pred_row, target_row)
                             : mse_loss(pred_row, target_row);
        window_loss = static_cast<double>(loss.item());
        tape.backward(ops::scale(loss, inv_batch));
      }
      if (!std::isfinite(window_loss)) {
        double max_grad = 0.0;
        for (auto* p : result.model.parameters()) {
          for (S g : p->tensor.grad()) {
            max_grad = std::max(max_grad, std::abs(static_cast<double>(g)));
          }
        }
        std::ostringstream os;
        os << "fit: non-finite loss at epoch " << epoch << ", window " << w
           << " (clip " << ci << "), max |grad| = " << max_grad;
        throw std::runtime_error(os.str());
      }
      epoch_loss += window_loss;
      if (++in_batch == cfg.batch_windows || w + 1 == order.size()) {
        opt.step();
        opt.zero_grad();
        in_batch = 0;
      }
    }
    epoch_loss /= static_cast<double>(order.size());

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss;
    log.val_mae = val_clips.empty()
                      ? 0.0
                      : validation_mae<Model, S>(result.model, val_clips,
                                                 window, input_size);
    result.log.push_back(log);
    if (progress) {
      *progress << "epoch " << epoch << " train_loss " << epoch_loss
                << " val_mae " << log.val_mae << "\n";
    }
  }
  return result;
}

inline void write_train_log_csv(const std::vector<EpochLog>& log,
                                std::ostream& os) {
  os << "epoch,train_loss,val_mae\n";
  for (const auto& e : log) {
    os << e.epoch << ',' << e.train_loss << ',' << e.val_mae << '\n';
  }
}

}  // namespace pulseforge
