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

#include "pulseforge/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "pulseforge/fft.hpp"
#include "pulseforge/rng.hpp"

namespace pulseforge {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

// Same spectral argmax hr_fft uses, but without its duration gate: labels of
// arbitrarily short clips still come from the generated waveform itself.
double spectral_argmax_bpm(const PulseTrace& bvp) {
  std::vector<double> centered = bvp.samples;
  const double mean =
      std::accumulate(centered.begin(), centered.end(), 0.0) /
      static_cast<double>(centered.size());
  for (double& v : centered) v -= mean;
  const auto min_len = static_cast<std::size_t>(std::ceil(600.0 * bvp.fps));
  std::size_t nfft = 0;
  const auto mag = magnitude_spectrum(centered, min_len, &nfft);
  const double bin_hz = bvp.fps / static_cast<double>(nfft);
  const auto k_lo = static_cast<std::size_t>(std::ceil(0.75 / bin_hz));
  const auto k_hi = std::min(
      mag.size() - 1, static_cast<std::size_t>(std::floor(2.5 / bin_hz)));
  std::size_t best = k_lo;
  for (std::size_t k = k_lo + 1; k <= k_hi; ++k) {
    if (mag[k] > mag[best]) best = k;
  }
  return 60.0 * static_cast<double>(best) * bin_hz;
}

// One period of the asymmetric beat on phase [0,1): a broad systolic peak
// followed by a smaller dicrotic bump, zero-centered so the fundamental
// dominates every harmonic in the heart-rate band.
double beat_template(double phase) {
  auto bump = [](double x, double center, double width) {
    const double d = (x - center) / width;
    return std::exp(-0.5 * d * d);
  };
  // wrap-aware evaluation keeps the waveform smooth across period edges
  double v = 0.0;
  for (int k = -1; k <= 1; ++k) {
    const double x = phase + k;
    v += bump(x, 0.22, 0.10) + 0.35 * bump(x, 0.55, 0.13);
  }
  return v;
}

}  // namespace

PulseTrace gen_bvp(double hr_bpm, double fps, double duration_s,
                   BvpShape shape) {
  require(hr_bpm > 0 && fps > 0 && duration_s > 0, "gen_bvp: invalid params");
  const auto n = static_cast<std::int64_t>(std::llround(duration_s * fps));
  PulseTrace out;
  out.fps = fps;
  out.kind = PulseTrace::Kind::kRaw;
  out.samples.resize(static_cast<std::size_t>(n));
  const double f = hr_bpm / 60.0;
  if (shape == BvpShape::kSinusoid) {
    for (std::int64_t i = 0; i < n; ++i) {
      out.samples[static_cast<std::size_t>(i)] =
          std::sin(kTwoPi * f * static_cast<double>(i) / fps);
    }
    return out;
  }
  // pulse template: sample, then normalize to zero mean and unit peak
  double mean = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double phase = std::fmod(f * static_cast<double>(i) / fps, 1.0);
    out.samples[static_cast<std::size_t>(i)] = beat_template(phase);
    mean += out.samples[static_cast<std::size_t>(i)];
  }
  mean /= static_cast<double>(n);
  double peak = 0.0;
  for (auto& v : out.samples) {
    v -= mean;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0) {
    for (auto& v : out.samples) v /= peak;
  }
  return out;
}

LabeledClip gen_clip(const SynthParams& p) {
  p.validate();
  LabeledClip out;
  out.bvp = gen_bvp(p.hr_bpm, p.fps, p.duration_s, p.bvp_shape);
  out.hr_gt = spectral_argmax_bpm(out.bvp);

  VideoClip& clip = out.clip;
  clip.fps = p.fps;
  clip.height = p.height;
  clip.width = p.width;
  clip.frames = static_cast<std::int64_t>(out.bvp.samples.size());
  clip.clip_id = p.clip_id;
  clip.data.resize(
      static_cast<std::size_t>(clip.frames * clip.frame_bytes()));

  RngStream root(p.seed);
  RngStream texture_rng = root.fork(1);

  // Static scene: smooth background gradient plus per-pixel texture; the
  // skin patch carries its own texture that translates rigidly with motion.
  const std::int64_t hw = p.height * p.width;
  std::vector<double> bg(static_cast<std::size_t>(hw * 3));
  for (std::int64_t y = 0; y < p.height; ++y) {
    for (std::int64_t x = 0; x < p.width; ++x) {
      const double grad =
          20.0 * static_cast<double>(x) / static_cast<double>(p.width) +
          10.0 * static_cast<double>(y) / static_cast<double>(p.height);
      for (int c = 0; c < 3; ++c) {
        bg[static_cast<std::size_t>((y * p.width + x) * 3 + c)] =
            80.0 + grad + texture_rng.uniform(-8.0, 8.0);
      }
    }
  }
  const double skin_base[3] = {182.0, 142.0, 118.0};
  std::vector<double> skin(static_cast<std::size_t>(p.skin_roi.w *
                                                    p.skin_roi.h * 3));
  for (std::int64_t i = 0; i < p.skin_roi.w * p.skin_roi.h; ++i) {
    for (int c = 0; c < 3; ++c) {
      skin[static_cast<std::size_t>(i * 3 + c)] =
          skin_base[c] + texture_rng.uniform(-6.0, 6.0);
    }
  }

  std::int64_t clipped = 0, roi_samples = 0;
  for (std::int64_t t = 0; t < clip.frames; ++t) {
    RngStream noise_rng = root.fork(1000 + t);
    const double ts = static_cast<double>(t) / p.fps;
    const double illum =
        1.0 + p.illumination_drift.amplitude *
                  std::sin(kTwoPi * p.illumination_drift.frequency_hz * ts);
    std::int64_t dx = 0, dy = 0;
    if (p.motion.type == MotionParams::Type::kTranslation) {
      dx = static_cast<std::int64_t>(std::llround(
          p.motion.amplitude_px * std::sin(kTwoPi * p.motion.frequency_hz *
                                           ts)));
      dy = static_cast<std::int64_t>(std::llround(
          p.motion.amplitude_px *
          std::sin(kTwoPi * p.motion.frequency_hz * ts + 1.3)));
    }
    const double pulse = p.pulse_amplitude *
                         out.bvp.samples[static_cast<std::size_t>(t)];
    std::uint8_t* frame =
        clip.data.data() + t * clip.frame_bytes();
    for (std::int64_t y = 0; y < p.height; ++y) {
      for (std::int64_t x = 0; x < p.width; ++x) {
        const std::int64_t rx = x - (p.skin_roi.x + dx);
        const std::int64_t ry = y - (p.skin_roi.y + dy);
        const bool in_roi = rx >= 0 && rx < p.skin_roi.w && ry >= 0 &&
                            ry < p.skin_roi.h;
        for (int c = 0; c < 3; ++c) {
          double v;
          if (in_roi) {
            const double base =
                skin[static_cast<std::size_t>((ry * p.skin_roi.w + rx) * 3 +
                                              c)];
            v = base * (1.0 + pulse * p.channel_weights[static_cast<
                                          std::size_t>(c)]);
            ++roi_samples;
          } else {
            v = bg[static_cast<std::size_t>((y * p.width + x) * 3 + c)];
          }
          v = illum * v + noise_rng.normal(0.0, p.noise_std);
          if (v < 0.0 || v > 255.0) {
            if (in_roi) ++clipped;
            v = std::clamp(v, 0.0, 255.0);
          }
          frame[(y * p.width + x) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(v));
        }
      }
    }
  }
  out.saturation_warning =
      roi_samples > 0 &&
      static_cast<double>(clipped) > 0.01 * static_cast<double>(roi_samples);
  return out;
}

SynthParams corpus_clip_params(const CorpusConfig& cfg, int index) {
  cfg.validate();
  require(index >= 0 && index < cfg.clips, "corpus: clip index out of range");
  RngStream rng = RngStream(cfg.seed).fork(static_cast<std::uint64_t>(index));
  SynthParams p;
  p.hr_bpm = rng.uniform(cfg.hr_lo, cfg.hr_hi);
  p.fps = cfg.fps;
  p.duration_s = cfg.duration_s;
  p.height = cfg.resolution;
  p.width = cfg.resolution;
  p.skin_roi = {cfg.resolution / 4, cfg.resolution / 4, cfg.resolution / 2,
                cfg.resolution / 2};
  p.pulse_amplitude = cfg.pulse_amplitude;
  p.noise_std = cfg.noise_levels[static_cast<std::size_t>(
      rng.next_u64() % cfg.noise_levels.size())];
  const double motion_amp = cfg.motion_amplitudes[static_cast<std::size_t>(
      rng.next_u64() % cfg.motion_amplitudes.size())];
  if (motion_amp > 0) {
    p.motion.type = MotionParams::Type::kTranslation;
    p.motion.amplitude_px = motion_amp;
    p.motion.frequency_hz = rng.uniform(cfg.motion_freq_lo,
                                        cfg.motion_freq_hi);
  }
  const double drift_amp = cfg.drift_amplitudes[static_cast<std::size_t>(
      rng.next_u64() % cfg.drift_amplitudes.size())];
  if (drift_amp > 0) {
    p.illumination_drift.amplitude = drift_amp;
    p.illumination_drift.frequency_hz =
        rng.uniform(cfg.drift_freq_lo, cfg.drift_freq_hi);
  }
  p.bvp_shape = cfg.shape;
  p.seed = splitmix64(cfg.seed ^ (0x517CC1B727220A95ULL +
                                  static_cast<std::uint64_t>(index)));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%04d", index);
  p.clip_id = buf;
  return p;
}

std::string corpus_split(const CorpusConfig& cfg, int index) {
  const int train_end = static_cast<int>(
      std::lround(cfg.train_frac * static_cast<double>(cfg.clips)));
  const int val_end = train_end + static_cast<int>(std::lround(
                                      cfg.val_frac *
                                      static_cast<double>(cfg.clips)));
  if (index < train_end) return "train";
  if (index < val_end) return "val";
  return "test";
}

}  // namespace pulseforge
