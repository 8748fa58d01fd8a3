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

#include "pulseforge/bench.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>

#ifdef __linux__
#include <sched.h>
#endif

#include "pulseforge/baselines.hpp"
#include "pulseforge/rng.hpp"

namespace pulseforge {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Parameter<float> conv_param(const std::string& name, int cout, int cin, int k,
                            RngStream rng) {
  const double bound = std::sqrt(6.0 / (cin * k * k));
  Tensor<float> t = Tensor<float>::zeros({cout, cin, k, k});
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.mutable_data()[i] = static_cast<float>(rng.uniform(-bound, bound));
  }
  return Parameter<float>(name, t);
}

Parameter<float> dense_param(const std::string& name, std::int64_t fin,
                             std::int64_t fout, RngStream rng) {
  Tensor<float> t = Tensor<float>::zeros({fin, fout});
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.mutable_data()[i] = static_cast<float>(rng.truncated_normal(0.0, 0.02));
  }
  return Parameter<float>(name, t);
}

void standardize_inplace(Tensor<float>& t) {
  auto arr = t.mutable_array();
  const float mean = arr.mean();
  const float sd = std::sqrt((arr - mean).square().mean());
  arr = (arr - mean) / (sd + 1e-6f);
}

}  // namespace

TwoBranchReference::TwoBranchReference(const ConvModelConfig& cfg,
                                       std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  RngStream root(seed);
  const int f0 = cfg_.conv_filters[0], f1 = cfg_.conv_filters[1];
  const int k = cfg_.kernel, c = cfg_.in_channels;
  std::uint64_t salt = 1;
  const int mcin[4] = {c, f0, f0, f1};
  const int mcout[4] = {f0, f0, f1, f1};
  for (int i = 0; i < 4; ++i) {
    mw_[i] = conv_param("motion.conv" + std::to_string(i), mcout[i], mcin[i],
                        k, root.fork(salt++));
    mb_[i] = Parameter<float>("motion.bias" + std::to_string(i),
                              Tensor<float>::zeros({mcout[i]}));
    aw_[i] = conv_param("appearance.conv" + std::to_string(i), mcout[i],
                        mcin[i], k, root.fork(salt++));
    ab_[i] = Parameter<float>("appearance.bias" + std::to_string(i),
                              Tensor<float>::zeros({mcout[i]}));
  }
  attw_[0] = conv_param("appearance.attn1", 1, f0, 1, root.fork(salt++));
  attb_[0] = Parameter<float>("appearance.attn1.bias",
                              Tensor<float>::zeros({1}));
  attw_[1] = conv_param("appearance.attn2", 1, f1, 1, root.fork(salt++));
  attb_[1] = Parameter<float>("appearance.attn2.bias",
                              Tensor<float>::zeros({1}));
  const std::int64_t side = cfg_.input_size / 4;
  dense_w_ = dense_param("motion.dense", f1 * side * side, cfg_.dense_hidden,
                         root.fork(salt++));
  dense_b_ = Parameter<float>("motion.dense.bias",
                              Tensor<float>::zeros({cfg_.dense_hidden}));
  out_w_ = dense_param("motion.out", cfg_.dense_hidden, 1, root.fork(salt++));
  out_b_ = Parameter<float>("motion.out.bias", Tensor<float>::zeros({1}));
}

TwoBranchReference::Inputs TwoBranchReference::preprocess(
    const Tensor<float>& clip) {
  require(clip.ndim() == 4 && clip.dim(0) >= 2,
          "two-branch preprocess: expects [N,C,H,W], N >= 2");
  const auto n = clip.dim(0);
  const auto per = clip.size() / n;
  Shape out_shape = clip.shape();
  out_shape[0] = n - 1;

  // normalized difference frames: (f[t+1]-f[t]) / (f[t+1]+f[t]+eps)
  Tensor<float> motion = Tensor<float>::zeros(out_shape);
  {
    Eigen::Map<const Eigen::ArrayXf> next(clip.data() + per, (n - 1) * per);
    Eigen::Map<const Eigen::ArrayXf> prev(clip.data(), (n - 1) * per);
    motion.mutable_array() = (next - prev) / (next + prev + 1e-6f);
  }
  standardize_inplace(motion);

  // standardized appearance frames aligned with the differences
  Tensor<float> appearance = Tensor<float>::zeros(out_shape);
  std::memcpy(appearance.mutable_data(), clip.data(),
              sizeof(float) * static_cast<std::size_t>((n - 1) * per));
  standardize_inplace(appearance);
  return {std::move(motion), std::move(appearance)};
}

Tensor<float> TwoBranchReference::motion_conv(const Tensor<float>& x,
                                              int layer) {
  Tensor<float> h = cfg_.use_tsm ? ops::tensor_shift(x, cfg_.fold_div) : x;
  h = ops::conv2d(h, mw_[layer].tensor, mb_[layer].tensor,
                  ops::Padding::kSame);
  return ops::tanh(h);
}

Tensor<float> TwoBranchReference::appearance_conv(const Tensor<float>& x,
                                                  int layer) {
  return ops::tanh(ops::conv2d(x, aw_[layer].tensor, ab_[layer].tensor,
                               ops::Padding::kSame));
}

Tensor<float> TwoBranchReference::forward(const Inputs& in) {
  require(in.motion.dim(2) == cfg_.input_size &&
              in.motion.dim(3) == cfg_.input_size,
          "two-branch forward: resolution mismatch");
  // appearance branch computes the masks
  Tensor<float> a = appearance_conv(in.appearance, 0);
  a = appearance_conv(a, 1);
  Tensor<float> mask1 = attention_mask(a, attw_[0].tensor, attb_[0].tensor);
  a = ops::avgpool2d(a);
  a = appearance_conv(a, 2);
  a = appearance_conv(a, 3);
  Tensor<float> mask2 = attention_mask(a, attw_[1].tensor, attb_[1].tensor);

  Tensor<float> m = motion_conv(in.motion, 0);
  m = motion_conv(m, 1);
  m = ops::mul_mask(m, mask1);
  m = ops::avgpool2d(m);
  m = motion_conv(m, 2);
  m = motion_conv(m, 3);
  m = ops::mul_mask(m, mask2);
  m = ops::avgpool2d(m);
  const auto frames = m.dim(0);
  const std::int64_t side = cfg_.input_size / 4;
  m = m.reshaped({frames, cfg_.conv_filters[1] * side * side});
  m = ops::tanh(ops::dense(m, dense_w_.tensor, dense_b_.tensor));
  m = ops::dense(m, out_w_.tensor, out_b_.tensor);
  return m.reshaped({frames});
}

std::int64_t TwoBranchReference::param_count() {
  std::int64_t n = 0;
  for (int i = 0; i < 4; ++i) {
    n += mw_[i].tensor.size() + mb_[i].tensor.size();
    n += aw_[i].tensor.size() + ab_[i].tensor.size();
  }
  for (int i = 0; i < 2; ++i) {
    n += attw_[i].tensor.size() + attb_[i].tensor.size();
  }
  return n + dense_w_.tensor.size() + dense_b_.tensor.size() +
         out_w_.tensor.size() + out_b_.tensor.size();
}

std::int64_t TwoBranchReference::flop_count(const ConvModelConfig& cfg) {
  const std::int64_t k = cfg.kernel, s = cfg.input_size, s2 = s / 2;
  const std::int64_t f0 = cfg.conv_filters[0], f1 = cfg.conv_filters[1];
  std::int64_t macs = 0;
  // motion branch mirrors the single-branch stack
  macs += conv2d_macs(k, cfg.in_channels, f0, s, s);
  macs += conv2d_macs(k, f0, f0, s, s);
  macs += conv2d_macs(k, f0, f1, s2, s2);
  macs += conv2d_macs(k, f1, f1, s2, s2);
  // appearance branch repeats it and adds the mask convolutions
  macs *= 2;
  macs += conv2d_macs(1, f0, 1, s, s);
  macs += conv2d_macs(1, f1, 1, s2, s2);
  const std::int64_t s4 = s / 4;
  macs += f1 * s4 * s4 * cfg.dense_hidden + cfg.dense_hidden;
  return macs;
}

std::string bench_method_name(BenchMethod m) {
  switch (m) {
    case BenchMethod::kConv: return "efficientphys-c";
    case BenchMethod::kT2: return "efficientphys-t2";
    case BenchMethod::kPos: return "pos";
    case BenchMethod::kChrom: return "chrom";
    case BenchMethod::kIca: return "ica";
    case BenchMethod::kTwoBranch: return "two-branch-ref";
  }
  return "?";
}

bool pin_to_single_cpu() {
#ifdef __linux__
  cpu_set_t allowed;
  CPU_ZERO(&allowed);
  if (sched_getaffinity(0, sizeof(allowed), &allowed) != 0) return false;
  for (int cpu = 0; cpu < CPU_SETSIZE; ++cpu) {
    if (CPU_ISSET(cpu, &allowed)) {
      cpu_set_t one;
      CPU_ZERO(&one);
      CPU_SET(cpu, &one);
      return sched_setaffinity(0, sizeof(one), &one) == 0;
    }
  }
  return false;
#else
  return false;
#endif
}

BenchRow bench_method(BenchMethod method, const LabeledClip& clip, int trials,
                      std::uint64_t seed) {
  require(trials >= 1, "bench: trials must be positive");
  if (!pin_to_single_cpu()) {
    throw std::runtime_error(
        "bench: refusing to run without single-CPU pinning");
  }

  BenchRow row;
  row.method = bench_method_name(method);
  row.trials = trials;

  ConvModelConfig conv_cfg;
  conv_cfg.input_size = static_cast<int>(clip.clip.height);
  TransformerConfig t2_cfg = TransformerConfig::t2();
  t2_cfg.input_size = static_cast<int>(clip.clip.height);
  require(clip.clip.height == clip.clip.width,
          "bench: clips must be square");

  const std::int64_t window = conv_cfg.frames_per_window;
  const std::int64_t frames_total = clip.clip.frames;
  require(frames_total >= window, "bench: clip shorter than one window");

  // shared frame handoff: materialize the window tensors outside the timed
  // region (no resize happens at matching resolution)
  auto ws = make_windows<float>(clip, window, window, clip.clip.height);
  std::vector<Tensor<float>> windows;
  for (std::int64_t k = 0; k < ws.size(); ++k) {
    windows.push_back(ws.frames(k));
  }
  const auto frames_used = static_cast<double>(
      static_cast<std::int64_t>(windows.size()) * window);

  std::vector<double> prep_times, model_times;
  // has_prep=false pins the preprocessing column to an exact zero instead of
  // timing an empty closure
  auto run_trials = [&](bool has_prep, auto&& prep_fn, auto&& model_fn) {
    for (int t = 0; t < trials + 2; ++t) {
      const auto t0 = Clock::now();
      auto staged = prep_fn();
      const double prep_s = has_prep ? seconds_since(t0) : 0.0;
      const auto t1 = Clock::now();
      model_fn(staged);
      const double model_s = seconds_since(t1);
      if (t >= 2) {  // warm-ups discarded
        prep_times.push_back(prep_s * 1e3 / frames_used);
        model_times.push_back(model_s * 1e3 / frames_used);
      }
    }
  };

  switch (method) {
    case BenchMethod::kConv: {
      EfficientPhysC<float> model(conv_cfg, seed);
      volatile float sink = 0;
      run_trials(false, [] { return 0; },
                 [&](int) {
                   for (const auto& w : windows) {
                     sink += model.forward(w, false)[0];
                   }
                 });
      row.macs_per_frame = EfficientPhysC<float>::flop_count(conv_cfg);
      row.params = model.param_count();
      break;
    }
    case BenchMethod::kT2: {
      EfficientPhysT<float> model(t2_cfg, seed);
      volatile float sink = 0;
      run_trials(false, [] { return 0; },
                 [&](int) {
                   for (const auto& w : windows) {
                     sink += model.forward(w, false)[0];
                   }
                 });
      row.macs_per_frame = EfficientPhysT<float>::flop_count(t2_cfg);
      row.params = model.param_count();
      break;
    }
    case BenchMethod::kTwoBranch: {
      TwoBranchReference model(conv_cfg, seed);
      volatile float sink = 0;
      run_trials(
          true,
          [&] {
            std::vector<TwoBranchReference::Inputs> staged;
            staged.reserve(windows.size());
            for (const auto& w : windows) {
              staged.push_back(TwoBranchReference::preprocess(w));
            }
            return staged;
          },
          [&](const std::vector<TwoBranchReference::Inputs>& staged) {
            for (const auto& s : staged) {
              sink += model.forward(s)[0];
            }
          });
      row.macs_per_frame = TwoBranchReference::flop_count(conv_cfg);
      row.params = model.param_count();
      break;
    }
    case BenchMethod::kPos:
    case BenchMethod::kChrom:
    case BenchMethod::kIca: {
      volatile double sink = 0;
      run_trials(false, [] { return 0; },
                 [&](int) {
                   RgbTrace trace = spatial_average(clip.clip);
                   if (method == BenchMethod::kPos) {
                     sink += pos(trace).samples[0];
                   } else if (method == BenchMethod::kChrom) {
                     sink += chrom(trace).samples[0];
                   } else {
                     sink += ica_pulse(trace, seed).pulse.samples[0];
                   }
                 });
      break;
    }
  }

  const double n = static_cast<double>(trials);
  row.preprocessing_ms =
      std::accumulate(prep_times.begin(), prep_times.end(), 0.0) / n;
  row.model_ms =
      std::accumulate(model_times.begin(), model_times.end(), 0.0) / n;
  row.total_ms = row.preprocessing_ms + row.model_ms;
  double var = 0.0;
  for (std::size_t i = 0; i < prep_times.size(); ++i) {
    const double total = prep_times[i] + model_times[i];
    var += (total - row.total_ms) * (total - row.total_ms);
  }
  row.std_ms = std::sqrt(var / n);
  row.unstable = row.std_ms > 0.5 * row.total_ms;
  return row;
}

BenchReport flop_table(const ConvModelConfig& conv_cfg,
                       const TransformerConfig& t1_cfg,
                       const TransformerConfig& t2_cfg) {
  BenchReport report;
  auto add = [&](const std::string& name, std::int64_t macs,
                 std::int64_t params) {
    BenchRow row;
    row.method = name;
    row.macs_per_frame = macs;
    row.params = params;
    report.rows.push_back(row);
  };
  EfficientPhysC<float> conv(conv_cfg, 0);
  add("efficientphys-c", EfficientPhysC<float>::flop_count(conv_cfg),
      conv.param_count());
  EfficientPhysT<float> t1(t1_cfg, 0);
  add("efficientphys-t1", EfficientPhysT<float>::flop_count(t1_cfg),
      t1.param_count());
  EfficientPhysT<float> t2(t2_cfg, 0);
  add("efficientphys-t2", EfficientPhysT<float>::flop_count(t2_cfg),
      t2.param_count());
  TwoBranchReference ref(conv_cfg, 0);
  add("two-branch-ref", TwoBranchReference::flop_count(conv_cfg),
      ref.param_count());
  return report;
}

void BenchReport::write_table(std::ostream& os) const {
  os << std::left << std::setw(18) << "Method" << std::right << std::setw(16)
     << "Preprocessing" << std::setw(12) << "Model" << std::setw(12) << "Total"
     << std::setw(14) << "MACs/frame" << std::setw(12) << "Params" << "\n";
  os << std::string(84, '-') << "\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    os << std::left << std::setw(18) << r.method << std::right << std::setw(16)
       << r.preprocessing_ms << std::setw(12) << r.model_ms << std::setw(12)
       << r.total_ms << std::setw(14) << r.macs_per_frame << std::setw(12)
       << r.params;
    if (r.unstable) os << "  [unstable]";
    os << "\n";
  }
}

void BenchReport::write_csv(std::ostream& os) const {
  os << "method,preprocessing_ms,model_ms,total_ms,std_ms,trials,"
        "macs_per_frame,params,unstable\n";
  os << std::fixed << std::setprecision(6);
  for (const auto& r : rows) {
    os << r.method << ',' << r.preprocessing_ms << ',' << r.model_ms << ','
       << r.total_ms << ',' << r.std_ms << ',' << r.trials << ','
       << r.macs_per_frame << ',' << r.params << ',' << (r.unstable ? 1 : 0)
       << "\n";
  }
}

}  // namespace pulseforge
