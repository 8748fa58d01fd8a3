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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testutil.hpp"

#include <cmath>

#include "pulseforge/baselines.hpp"
#include "pulseforge/fft.hpp"
#include "pulseforge/synth.hpp"

using namespace pulseforge;

TEST_CASE("gen_bvp: sample count and spectral argmax") {
  auto bvp = gen_bvp(90.0, 30.0, 60.0, BvpShape::kSinusoid);
  CHECK(bvp.samples.size() == 1800);
  CHECK(within(hr_fft(bvp), 90.0, 0.1));

  auto tpl = gen_bvp(72.0, 30.0, 60.0, BvpShape::kPulseTemplate);
  CHECK(within(hr_fft(tpl), 72.0, 0.1));
}

TEST_CASE("pulse template fundamental dominates the band") {
  for (double hr : {50.0, 75.0, 110.0, 140.0}) {
    auto bvp = gen_bvp(hr, 30.0, 30.0, BvpShape::kPulseTemplate);
    double mean = 0.0;
    for (double v : bvp.samples) mean += v;
    mean /= static_cast<double>(bvp.samples.size());
    std::vector<double> centered;
    for (double v : bvp.samples) centered.push_back(v - mean);
    std::size_t nfft = 0;
    auto mag = magnitude_spectrum(centered, 18000, &nfft);
    const double bin_hz = 30.0 / static_cast<double>(nfft);
    const double f0 = hr / 60.0;
    // fundamental bin must beat every bin > half a beat away, inside the band
    const auto k0 = static_cast<std::size_t>(std::lround(f0 / bin_hz));
    double fund = 0.0;
    for (std::size_t k = k0 > 8 ? k0 - 8 : 0; k <= k0 + 8; ++k) {
      fund = std::max(fund, mag[k]);
    }
    const auto k_lo = static_cast<std::size_t>(std::ceil(0.75 / bin_hz));
    const auto k_hi = static_cast<std::size_t>(std::floor(2.5 / bin_hz));
    for (std::size_t k = k_lo; k <= k_hi && k < mag.size(); ++k) {
      if (std::abs(static_cast<double>(k) - static_cast<double>(k0)) * bin_hz >
          0.25 * f0) {
        CHECK(mag[k] < fund);
      }
    }
  }
}

TEST_CASE("gen_clip: zero amplitude and zero noise gives a constant video") {
  SynthParams p;
  p.pulse_amplitude = 0.0;
  p.noise_std = 0.0;
  p.duration_s = 2.0;
  p.seed = 9;
  auto labeled = gen_clip(p);
  const auto& c = labeled.clip;
  REQUIRE(c.frames == 60);
  const std::int64_t fb = c.frame_bytes();
  for (std::int64_t t = 1; t < c.frames; ++t) {
    for (std::int64_t i = 0; i < fb; ++i) {
      REQUIRE(c.data[static_cast<std::size_t>(t * fb + i)] ==
              c.data[static_cast<std::size_t>(i)]);
    }
  }
}

TEST_CASE("gen_clip: same seed is bitwise identical") {
  SynthParams p;
  p.duration_s = 3.0;
  p.noise_std = 2.0;
  p.motion.type = MotionParams::Type::kTranslation;
  p.motion.amplitude_px = 1.5;
  p.motion.frequency_hz = 0.8;
  p.seed = 77;
  auto a = gen_clip(p);
  auto b = gen_clip(p);
  REQUIRE(a.clip.data.size() == b.clip.data.size());
  CHECK(a.clip.data == b.clip.data);
  CHECK(a.hr_gt == b.hr_gt);

  SynthParams q = p;
  q.seed = 78;
  auto c = gen_clip(q);
  CHECK(a.clip.data != c.clip.data);
}

TEST_CASE("gen_clip: hr_gt is recoverable from its own bvp") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    SynthParams p;
    p.hr_bpm = 50.0 + 20.0 * static_cast<double>(s);
    p.duration_s = 12.0;
    p.seed = s;
    auto labeled = gen_clip(p);
    CHECK(within(hr_fft(labeled.bvp), labeled.hr_gt, 0.11));
    CHECK(labeled.bvp.samples.size() ==
          static_cast<std::size_t>(labeled.clip.frames));
  }
}

TEST_CASE("gen_clip: green ROI mean tracks the bvp when noise-free") {
  SynthParams p;
  p.pulse_amplitude = 0.03;
  p.noise_std = 0.0;
  p.duration_s = 20.0;
  p.hr_bpm = 66.0;
  p.seed = 21;
  auto labeled = gen_clip(p);
  // green mean over the ROI region only
  std::vector<double> roi_mean(static_cast<std::size_t>(labeled.clip.frames));
  for (std::int64_t t = 0; t < labeled.clip.frames; ++t) {
    const std::uint8_t* f = labeled.clip.frame(t);
    double acc = 0.0;
    for (std::int64_t y = p.skin_roi.y; y < p.skin_roi.y + p.skin_roi.h; ++y) {
      for (std::int64_t x = p.skin_roi.x; x < p.skin_roi.x + p.skin_roi.w;
           ++x) {
        acc += f[(y * labeled.clip.width + x) * 3 + 1];
      }
    }
    roi_mean[static_cast<std::size_t>(t)] =
        acc / static_cast<double>(p.skin_roi.w * p.skin_roi.h);
  }
  // correlation with the bvp
  const auto n = roi_mean.size();
  double mr = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mr += roi_mean[i];
    mb += labeled.bvp.samples[i];
  }
  mr /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = roi_mean[i] - mr, b = labeled.bvp.samples[i] - mb;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  CHECK(sxy / std::sqrt(sxx * syy) > 0.99);
}

TEST_CASE("gen_clip: no motion and no drift leaves the background static") {
  SynthParams p;
  p.noise_std = 0.0;
  p.duration_s = 4.0;
  p.seed = 5;
  auto labeled = gen_clip(p);
  const auto& c = labeled.clip;
  // pixel far outside the ROI must be constant over time
  const std::int64_t px = 1, py = 1;
  const std::uint8_t v0 = c.frame(0)[(py * c.width + px) * 3];
  for (std::int64_t t = 1; t < c.frames; ++t) {
    CHECK(c.frame(t)[(py * c.width + px) * 3] == v0);
  }
}

TEST_CASE("gen_clip: saturation warning on absurd amplitude") {
  SynthParams p;
  p.pulse_amplitude = 1.0;  // +/-100% of base color saturates 8 bits
  p.duration_s = 2.0;
  p.seed = 3;
  auto labeled = gen_clip(p);
  CHECK(labeled.saturation_warning);

  SynthParams ok;
  ok.duration_s = 2.0;
  ok.seed = 3;
  CHECK_FALSE(gen_clip(ok).saturation_warning);
}

TEST_CASE("gen_clip: pos recovers 75 BPM at a=0.02") {
  SynthParams p;
  p.hr_bpm = 75.0;
  p.duration_s = 60.0;
  p.pulse_amplitude = 0.02;
  p.noise_std = 0.0;
  p.seed = 11;
  auto labeled = gen_clip(p);
  auto tr = spatial_average(labeled.clip);
  CHECK(within(hr_fft(pos(tr)), 75.0, 1.0));
}

TEST_CASE("gen_clip: parameter validation") {
  SynthParams p;
  p.hr_bpm = 200.0;
  CHECK_THROWS_AS(gen_clip(p), InvalidArgument);
  SynthParams q;
  q.skin_roi = {30, 30, 10, 10};  // overflows the 36x36 frame
  CHECK_THROWS_AS(gen_clip(q), InvalidArgument);
}
