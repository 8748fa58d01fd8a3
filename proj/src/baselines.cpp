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

#include "pulseforge/baselines.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "pulseforge/fft.hpp"
#include "pulseforge/rng.hpp"

namespace pulseforge {

namespace {

double population_std(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().mean());
}

// Windowed projection shared by POS and CHROM: both temporally normalize each
// channel by its window mean, project, combine with an adaptive std ratio,
// and overlap-add the mean-subtracted result.
template <typename Projector>
PulseTrace windowed_projection(const RgbTrace& trace, double window_s,
                               Projector project) {
  const auto T = trace.samples.rows();
  require(trace.fps > 0, "pulse extraction: fps must be positive");
  require(static_cast<double>(T) >= 2.0 * trace.fps,
          "pulse extraction: trace must cover at least 2 s");
  const auto L = static_cast<Eigen::Index>(std::lround(window_s * trace.fps));
  require(L >= 2, "pulse extraction: window too short");
  require(T >= L, "pulse extraction: trace shorter than one window");

  PulseTrace out;
  out.fps = trace.fps;
  out.kind = PulseTrace::Kind::kRaw;
  out.samples.assign(static_cast<std::size_t>(T), 0.0);

  Eigen::Matrix<double, Eigen::Dynamic, 3> norm(L, 3);
  for (Eigen::Index start = 0; start + L <= T; ++start) {
    bool degenerate = false;
    for (int c = 0; c < 3; ++c) {
      const double mean = trace.samples.col(c).segment(start, L).mean();
      if (mean == 0.0) {
        degenerate = true;
        break;
      }
      norm.col(c) = trace.samples.col(c).segment(start, L) / mean;
    }
    if (degenerate) continue;  // emit zeros for this window
    Eigen::VectorXd h = project(norm);
    h.array() -= h.mean();
    for (Eigen::Index i = 0; i < L; ++i) {
      out.samples[static_cast<std::size_t>(start + i)] += h(i);
    }
  }
  return out;
}

// Fraction of spectral power inside the heart-rate band.
double band_power_fraction(const std::vector<double>& x, double fps) {
  std::vector<double> centered = x;
  double mean = 0.0;
  for (double v : centered) mean += v;
  mean /= static_cast<double>(centered.size());
  for (double& v : centered) v -= mean;
  std::size_t nfft = 0;
  const auto mag = magnitude_spectrum(centered, centered.size(), &nfft);
  const double bin_hz = fps / static_cast<double>(nfft);
  double total = 0.0, band = 0.0;
  for (std::size_t k = 1; k < mag.size(); ++k) {
    const double p = mag[k] * mag[k];
    total += p;
    const double f = static_cast<double>(k) * bin_hz;
    if (f >= 0.75 && f <= 2.5) band += p;
  }
  return total > 0 ? band / total : 0.0;
}

}  // namespace

RgbTrace spatial_average(const VideoClip& clip, Region region) {
  require(clip.frames >= 1 && clip.height >= 1 && clip.width >= 1,
          "spatial_average: empty clip");
  std::int64_t x0 = 0, y0 = 0, x1 = clip.width, y1 = clip.height;
  if (region.kind == Region::Kind::kCenterCrop) {
    const auto cw = static_cast<std::int64_t>(
        std::lround(region.crop_fraction * static_cast<double>(clip.width)));
    const auto ch = static_cast<std::int64_t>(
        std::lround(region.crop_fraction * static_cast<double>(clip.height)));
    require(cw >= 1 && ch >= 1, "spatial_average: empty crop region");
    x0 = (clip.width - cw) / 2;
    y0 = (clip.height - ch) / 2;
    x1 = x0 + cw;
    y1 = y0 + ch;
  }
  RgbTrace out;
  out.fps = clip.fps;
  out.samples.resize(clip.frames, 3);
  const double count = static_cast<double>((x1 - x0) * (y1 - y0));
  for (std::int64_t t = 0; t < clip.frames; ++t) {
    const std::uint8_t* frame = clip.frame(t);
    double acc[3] = {0, 0, 0};
    for (std::int64_t y = y0; y < y1; ++y) {
      const std::uint8_t* row = frame + (y * clip.width + x0) * 3;
      for (std::int64_t x = 0; x < x1 - x0; ++x) {
        acc[0] += row[x * 3 + 0];
        acc[1] += row[x * 3 + 1];
        acc[2] += row[x * 3 + 2];
      }
    }
    for (int c = 0; c < 3; ++c) out.samples(t, c) = acc[c] / count;
  }
  return out;
}

PulseTrace pos(const RgbTrace& trace, double window_s) {
  return windowed_projection(
      trace, window_s,
      [](const Eigen::Matrix<double, Eigen::Dynamic, 3>& norm) {
        const Eigen::VectorXd s1 = norm.col(1) - norm.col(2);
        const Eigen::VectorXd s2 =
            -2.0 * norm.col(0) + norm.col(1) + norm.col(2);
        const double sd2 = population_std(s2);
        const double alpha = sd2 > 1e-12 ? population_std(s1) / sd2 : 0.0;
        return Eigen::VectorXd(s1 + alpha * s2);
      });
}

PulseTrace chrom(const RgbTrace& trace, double window_s) {
  return windowed_projection(
      trace, window_s,
      [](const Eigen::Matrix<double, Eigen::Dynamic, 3>& norm) {
        const Eigen::VectorXd x = 3.0 * norm.col(0) - 2.0 * norm.col(1);
        const Eigen::VectorXd y =
            1.5 * norm.col(0) + norm.col(1) - 1.5 * norm.col(2);
        const double sdy = population_std(y);
        const double alpha = sdy > 1e-12 ? population_std(x) / sdy : 0.0;
        return Eigen::VectorXd(x - alpha * y);
      });
}

IcaResult ica_pulse(const RgbTrace& trace, std::uint64_t seed) {
  const auto T = trace.samples.rows();
  require(trace.fps > 0, "ica: fps must be positive");
  require(static_cast<double>(T) >= 10.0 * trace.fps,
          "ica: trace must cover at least 10 s");

  // detrend (remove per-channel linear fit) and standardize
  Eigen::Matrix<double, Eigen::Dynamic, 3> x = trace.samples;
  Eigen::VectorXd t_axis(T);
  for (Eigen::Index i = 0; i < T; ++i) t_axis(i) = static_cast<double>(i);
  const double t_mean = t_axis.mean();
  const double t_var = (t_axis.array() - t_mean).square().sum();
  for (int c = 0; c < 3; ++c) {
    const double mean = x.col(c).mean();
    const double slope =
        ((t_axis.array() - t_mean) * (x.col(c).array() - mean)).sum() / t_var;
    x.col(c).array() -= mean + slope * (t_axis.array() - t_mean);
    const double sd = population_std(x.col(c));
    if (sd > 1e-12) x.col(c) /= sd;
  }

  // whiten via the 3x3 covariance eigendecomposition
  const Eigen::Matrix3d cov =
      x.transpose() * x / static_cast<double>(T);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d evals = eig.eigenvalues().cwiseMax(1e-12);
  const Eigen::Matrix3d whitener = evals.cwiseSqrt().cwiseInverse().asDiagonal() *
                                   eig.eigenvectors().transpose();
  const Eigen::Matrix<double, Eigen::Dynamic, 3> z =
      (whitener * x.transpose()).transpose();

  // symmetric orthogonalization helper: W <- (W W^T)^{-1/2} W
  auto sym_orth = [](Eigen::Matrix3d w) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> e(w * w.transpose());
    const Eigen::Matrix3d inv_sqrt =
        e.eigenvectors() *
        e.eigenvalues().cwiseMax(1e-12).cwiseSqrt().cwiseInverse().asDiagonal() *
        e.eigenvectors().transpose();
    return Eigen::Matrix3d(inv_sqrt * w);
  };

  RngStream rng(seed);
  Eigen::Matrix3d w;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) w(i, j) = rng.normal();
  }
  w = sym_orth(w);

  IcaResult result;
  const int max_iter = 200;
  const double tol = 1e-4;
  result.converged = false;
  for (int it = 0; it < max_iter; ++it) {
    // fixed-point update with tanh contrast
    const Eigen::Matrix<double, Eigen::Dynamic, 3> u = z * w.transpose();
    const Eigen::Matrix<double, Eigen::Dynamic, 3> gu = u.array().tanh();
    const Eigen::Matrix3d e_gz =
        gu.transpose() * z / static_cast<double>(T);
    Eigen::Vector3d e_gprime;
    for (int c = 0; c < 3; ++c) {
      e_gprime(c) = (1.0 - gu.col(c).array().square()).mean();
    }
    Eigen::Matrix3d w_new = e_gz - e_gprime.asDiagonal() * w;
    w_new = sym_orth(w_new);
    // convergence: directions stable up to sign
    const double delta =
        1.0 - (w_new * w.transpose()).diagonal().cwiseAbs().minCoeff();
    w = w_new;
    result.iterations = it + 1;
    if (delta < tol) {
      result.converged = true;
      break;
    }
  }

  const Eigen::Matrix<double, Eigen::Dynamic, 3> sources = z * w.transpose();
  int best = 0;
  double best_frac = -1.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> s(static_cast<std::size_t>(T));
    for (Eigen::Index i = 0; i < T; ++i) {
      s[static_cast<std::size_t>(i)] = sources(i, c);
    }
    const double frac = band_power_fraction(s, trace.fps);
    if (frac > best_frac) {
      best_frac = frac;
      best = c;
    }
  }

  result.pulse.fps = trace.fps;
  result.pulse.kind = PulseTrace::Kind::kRaw;
  result.pulse.samples.resize(static_cast<std::size_t>(T));
  for (Eigen::Index i = 0; i < T; ++i) {
    result.pulse.samples[static_cast<std::size_t>(i)] = sources(i, best);
  }

  // sign-align with the green channel inside the heart-rate band
  PulseTrace green;
  green.fps = trace.fps;
  green.samples.resize(static_cast<std::size_t>(T));
  for (Eigen::Index i = 0; i < T; ++i) {
    green.samples[static_cast<std::size_t>(i)] = x(i, 1);
  }
  try {
    const PulseTrace pb = bandpass(result.pulse);
    const PulseTrace gb = bandpass(green);
    double dot = 0.0;
    for (std::size_t i = 0; i < pb.samples.size(); ++i) {
      dot += pb.samples[i] * gb.samples[i];
    }
    if (dot < 0) {
      for (auto& v : result.pulse.samples) v = -v;
    }
  } catch (const InvalidArgument&) {
    // band outside Nyquist for very low fps: leave the sign as-is
  }
  return result;
}

}  // namespace pulseforge
