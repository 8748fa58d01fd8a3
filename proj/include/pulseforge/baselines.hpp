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

#include <Eigen/Core>
#include <cstdint>

#include "pulseforge/dataio.hpp"
#include "pulseforge/signal.hpp"

namespace pulseforge {

/// Per-frame mean R,G,B over a fixed region. No face detection anywhere:
/// the region is the whole frame or a centered crop.
struct RgbTrace {
  Eigen::Matrix<double, Eigen::Dynamic, 3> samples;  // [T,3]
  double fps = 0.0;
};

struct Region {
  enum class Kind { kFull, kCenterCrop };
  Kind kind = Kind::kFull;
  double crop_fraction = 0.5;  // side fraction kept when kCenterCrop

  static Region full() { return {Kind::kFull, 1.0}; }
  static Region center_crop(double fraction) {
    return {Kind::kCenterCrop, fraction};
  }
};

RgbTrace spatial_average(const VideoClip& clip, Region region = Region::full());

/// Plane-orthogonal-to-skin pulse extraction with 1.6 s sliding windows,
/// hop one sample, mean-subtracted overlap-add.
PulseTrace pos(const RgbTrace& trace, double window_s = 1.6);

/// Chrominance-based extraction: X = 3R-2G, Y = 1.5R+G-1.5B on
/// mean-normalized channels, S = X - (std X / std Y) * Y.
PulseTrace chrom(const RgbTrace& trace, double window_s = 1.6);

struct IcaResult {
  PulseTrace pulse;
  bool converged = true;
  int iterations = 0;
};

/// Symmetric fixed-point ICA with tanh contrast over detrended, standardized,
/// whitened channels. Returns the component with the largest spectral power
/// fraction in 0.75-2.5 Hz, sign-aligned with the green channel.
IcaResult ica_pulse(const RgbTrace& trace, std::uint64_t seed);

}  // namespace pulseforge
