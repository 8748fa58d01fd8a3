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

#include "pulseforge/dataio.hpp"

namespace pulseforge {

enum class BvpShape { kSinusoid, kPulseTemplate };

struct MotionParams {
  enum class Type { kNone, kTranslation };
  Type type = Type::kNone;
  double amplitude_px = 0.0;
  double frequency_hz = 0.0;
};

struct DriftParams {
  double amplitude = 0.0;  // relative luminance swing
  double frequency_hz = 0.0;
};

struct RoiRect {
  std::int64_t x = 0, y = 0, w = 0, h = 0;
};

/// Everything the generator needs to render one clip with exact ground truth.
struct SynthParams {
  double hr_bpm = 75.0;
  double fps = 30.0;
  double duration_s = 10.0;
  std::int64_t height = 36, width = 36;
  RoiRect skin_roi{9, 9, 18, 18};
  double pulse_amplitude = 0.02;  // fraction of base color
  std::array<double, 3> channel_weights{0.3, 0.8, 0.4};
  double noise_std = 1.0;  // 8-bit units
  MotionParams motion;
  DriftParams illumination_drift;
  BvpShape bvp_shape = BvpShape::kPulseTemplate;
  std::uint64_t seed = 0;
  std::string clip_id = "synthetic";

  void validate() const {
    require(hr_bpm >= 45.0 && hr_bpm <= 150.0,
            "synth: hr_bpm outside the 45-150 reporting band");
    require(fps > 5.0 && duration_s > 0, "synth: fps/duration invalid");
    require(pulse_amplitude >= 0, "synth: pulse amplitude must be >= 0");
    require(skin_roi.x >= 0 && skin_roi.y >= 0 && skin_roi.w > 0 &&
                skin_roi.h > 0 && skin_roi.x + skin_roi.w <= width &&
                skin_roi.y + skin_roi.h <= height,
            "synth: ROI must lie within the frame");
  }
};

/// Ground-truth waveform: a unit sinusoid at hr/60 Hz, or a periodic
/// asymmetric beat (systolic peak plus dicrotic bump) whose fundamental
/// dominates the 0.75-2.5 Hz band.
PulseTrace gen_bvp(double hr_bpm, double fps, double duration_s,
                   BvpShape shape);

/// Renders frame(t) = I(t) * base * (1 + a*bvp(t)*cw ⊙ roi(t)) + noise,
/// clipped to [0,255] and quantized to 8 bits. hr_gt is recomputed from the
/// generated bvp via hr_fft, so labels are exact by construction.
LabeledClip gen_clip(const SynthParams& p);

/// Default training corpus: clips with HR uniform in [48,144] BPM and mixed
/// noise/motion/illumination levels, all derived from (seed, clip index).
struct CorpusConfig {
  int clips = 200;
  double duration_s = 10.0;
  double fps = 30.0;
  int resolution = 36;
  double hr_lo = 48.0, hr_hi = 144.0;
  double pulse_amplitude = 0.02;
  std::vector<double> noise_levels{0.5, 1.5, 3.0};
  std::vector<double> motion_amplitudes{0.0, 1.0, 2.0};
  double motion_freq_lo = 0.3, motion_freq_hi = 1.4;
  std::vector<double> drift_amplitudes{0.0, 0.02};
  double drift_freq_lo = 0.05, drift_freq_hi = 0.3;
  BvpShape shape = BvpShape::kPulseTemplate;
  std::uint64_t seed = 2026;
  double train_frac = 0.8, val_frac = 0.1;  // remainder is the test split

  void validate() const {
    require(clips >= 1 && duration_s > 0 && fps > 5, "corpus: invalid size");
    require(hr_lo >= 45 && hr_hi <= 150 && hr_lo < hr_hi,
            "corpus: HR range must sit inside [45,150]");
    require(train_frac > 0 && val_frac >= 0 && train_frac + val_frac < 1.0,
            "corpus: split fractions must leave a test remainder");
  }
};

/// Per-clip generator parameters; independent of every other index.
SynthParams corpus_clip_params(const CorpusConfig& cfg, int index);
/// Split tag by position: first train_frac, then val_frac, remainder test.
std::string corpus_split(const CorpusConfig& cfg, int index);

}  // namespace pulseforge
