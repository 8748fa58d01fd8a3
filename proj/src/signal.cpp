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

#include "pulseforge/signal.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <numeric>

#include <json.hpp>

#include "pulseforge/fft.hpp"

namespace pulseforge {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Traces shorter than this cannot carry a meaningful 0.75 Hz component.
// Derivative traces of 10 s clips run just under 10 s, so the floor sits at
// 8 s rather than at the nominal clip length.
constexpr double kMinHrDurationS = 8.0;

struct Zpk {
  std::vector<std::complex<double>> zeros;
  std::vector<std::complex<double>> poles;
  double gain = 1.0;
};

// Analog Butterworth low-pass prototype (unit cutoff, no finite zeros).
Zpk butter_prototype(int order) {
  Zpk p;
  for (int k = 0; k < order; ++k) {
    const double theta = kPi * (2.0 * k + order + 1.0) / (2.0 * order);
    p.poles.emplace_back(std::cos(theta), std::sin(theta));
  }
  p.gain = 1.0;
  return p;
}

// Low-pass prototype -> band-pass with center w0 and bandwidth bw (rad/s).
Zpk lp_to_bp(const Zpk& lp, double w0, double bw) {
  Zpk bp;
  for (const auto& p : lp.poles) {
    const std::complex<double> half = p * (bw / 2.0);
    const std::complex<double> disc = std::sqrt(half * half - w0 * w0);
    bp.poles.push_back(half + disc);
    bp.poles.push_back(half - disc);
  }
  bp.zeros.assign(lp.poles.size(), {0.0, 0.0});
  bp.gain = lp.gain * std::pow(bw, static_cast<double>(lp.poles.size()));
  return bp;
}

// Bilinear transform at sample rate fs.
Zpk bilinear(const Zpk& analog, double fs) {
  const double fs2 = 2.0 * fs;
  Zpk dig;
  std::complex<double> num(1.0, 0.0), den(1.0, 0.0);
  for (const auto& z : analog.zeros) {
    dig.zeros.push_back((fs2 + z) / (fs2 - z));
    num *= (fs2 - z);
  }
  for (const auto& p : analog.poles) {
    dig.poles.push_back((fs2 + p) / (fs2 - p));
    den *= (fs2 - p);
  }
  // pad zeros at z = -1 up to the pole count
  while (dig.zeros.size() < dig.poles.size()) dig.zeros.push_back({-1.0, 0.0});
  dig.gain = analog.gain * (num / den).real();
  return dig;
}

std::vector<double> poly_from_roots(
    const std::vector<std::complex<double>>& roots) {
  std::vector<std::complex<double>> c{{1.0, 0.0}};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(c.size() + 1, {0.0, 0.0});
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= c[i] * r;
    }
    c = std::move(next);
  }
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

struct Ba {
  std::vector<double> b, a;
};

Ba butter_bandpass(double lo_hz, double hi_hz, double fs, int order = 2) {
  const double warped_lo = 2.0 * fs * std::tan(kPi * lo_hz / fs);
  const double warped_hi = 2.0 * fs * std::tan(kPi * hi_hz / fs);
  const double w0 = std::sqrt(warped_lo * warped_hi);
  const double bw = warped_hi - warped_lo;
  Zpk dig = bilinear(lp_to_bp(butter_prototype(order), w0, bw), fs);
  Ba ba;
  ba.b = poly_from_roots(dig.zeros);
  for (auto& v : ba.b) v *= dig.gain;
  ba.a = poly_from_roots(dig.poles);
  return ba;
}

// Steady-state initial filter delays for a unit step (scipy lfilter_zi).
std::vector<double> lfilter_zi(const Ba& ba) {
  const std::size_t n = ba.a.size() - 1;
  Eigen::MatrixXd IminusA = Eigen::MatrixXd::Identity(
      static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  // companion(a).T: first column is -a[1:]/a[0]; superdiagonal shifts.
  for (std::size_t i = 0; i < n; ++i) {
    IminusA(static_cast<Eigen::Index>(i), 0) += ba.a[i + 1] / ba.a[0];
    if (i + 1 < n) {
      IminusA(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1)) -=
          1.0;
    }
  }
  Eigen::VectorXd B(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    B(static_cast<Eigen::Index>(i)) = ba.b[i + 1] - ba.a[i + 1] * ba.b[0];
  }
  Eigen::VectorXd zi = IminusA.partialPivLu().solve(B);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = zi(static_cast<Eigen::Index>(i));
  return out;
}

// Direct form II transposed with initial state z.
std::vector<double> lfilter(const Ba& ba, const std::vector<double>& x,
                            std::vector<double> z) {
  const std::size_t n = ba.a.size() - 1;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double yi = ba.b[0] * xi + z[0];
    for (std::size_t j = 0; j < n - 1; ++j) {
      z[j] = ba.b[j + 1] * xi + z[j + 1] - ba.a[j + 1] * yi;
    }
    z[n - 1] = ba.b[n] * xi - ba.a[n] * yi;
    y[i] = yi;
  }
  return y;
}

// Zero-phase filtering with odd-extension padding (scipy filtfilt defaults).
std::vector<double> filtfilt(const Ba& ba, const std::vector<double>& x) {
  const std::size_t padlen = 3 * std::max(ba.a.size(), ba.b.size());
  require(x.size() > padlen,
          "bandpass: signal too short for zero-phase filtering");
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  const double last = x.back();
  for (std::size_t i = 2; i <= padlen + 1; ++i) {
    ext.push_back(2 * last - x[x.size() - i]);
  }
  const std::vector<double> zi = lfilter_zi(ba);
  auto scaled = [&](double x0) {
    std::vector<double> z(zi.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = zi[i] * x0;
    return z;
  };
  std::vector<double> y = lfilter(ba, ext, scaled(ext.front()));
  std::reverse(y.begin(), y.end());
  y = lfilter(ba, y, scaled(y.front()));
  std::reverse(y.begin(), y.end());
  return {y.begin() + static_cast<std::ptrdiff_t>(padlen),
          y.end() - static_cast<std::ptrdiff_t>(padlen)};
}

void check_has_signal(const std::vector<double>& x) {
  double mean = std::accumulate(x.begin(), x.end(), 0.0) /
                static_cast<double>(x.size());
  double dev = 0.0;
  for (double v : x) dev = std::max(dev, std::abs(v - mean));
  if (dev < 1e-12 * std::max(1.0, std::abs(mean))) {
    throw UndefinedHrError("trace carries no signal (constant or all zero)");
  }
}

}  // namespace

PulseTrace bandpass(const PulseTrace& x, double lo_hz, double hi_hz) {
  require(x.fps > 0, "bandpass: fps must be positive");
  require(lo_hz > 0 && lo_hz < hi_hz, "bandpass: need 0 < lo < hi");
  require(hi_hz < x.fps / 2.0, "bandpass: hi cutoff must be below Nyquist");
  const Ba ba = butter_bandpass(lo_hz, hi_hz, x.fps);
  PulseTrace out;
  out.samples = filtfilt(ba, x.samples);
  out.fps = x.fps;
  out.kind = PulseTrace::Kind::kFiltered;
  return out;
}

double hr_fft(const PulseTrace& x, double lo_hz, double hi_hz) {
  require(x.fps > 0, "hr_fft: fps must be positive");
  require(hi_hz < x.fps / 2.0, "hr_fft: band must lie below Nyquist");
  require(x.duration_s() >= kMinHrDurationS,
          "hr_fft: trace shorter than 8 s");
  check_has_signal(x.samples);
  const double mean = std::accumulate(x.samples.begin(), x.samples.end(), 0.0) /
                      static_cast<double>(x.samples.size());
  std::vector<double> centered(x.samples.size());
  for (std::size_t i = 0; i < centered.size(); ++i) {
    centered[i] = x.samples[i] - mean;
  }
  // 600*fps samples put the bin width at 0.1 BPM before pow2 rounding.
  const auto min_len = static_cast<std::size_t>(std::ceil(600.0 * x.fps));
  std::size_t nfft = 0;
  const std::vector<double> mag = magnitude_spectrum(centered, min_len, &nfft);
  const double bin_hz = x.fps / static_cast<double>(nfft);
  const auto k_lo = static_cast<std::size_t>(std::ceil(lo_hz / bin_hz));
  const auto k_hi = std::min(
      mag.size() - 1, static_cast<std::size_t>(std::floor(hi_hz / bin_hz)));
  require(k_lo <= k_hi, "hr_fft: empty frequency band");
  std::size_t best = k_lo;
  for (std::size_t k = k_lo + 1; k <= k_hi; ++k) {
    if (mag[k] > mag[best]) best = k;
  }
  if (mag[best] <= 0.0) {
    throw UndefinedHrError("hr_fft: no spectral content in band");
  }
  return 60.0 * static_cast<double>(best) * bin_hz;
}

double hr_peaks(const PulseTrace& x) {
  require(x.fps > 0, "hr_peaks: fps must be positive");
  require(x.duration_s() >= kMinHrDurationS,
          "hr_peaks: trace shorter than 8 s");
  check_has_signal(x.samples);
  const auto& v = x.samples;
  const std::size_t n = v.size();
  const double mean =
      std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double s : v) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  const double min_prom = 0.3 * sd;
  const double min_sep = x.fps / 2.5;  // fastest credible beat

  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (v[i] > v[i - 1] && v[i] >= v[i + 1]) candidates.push_back(i);
  }
  // scipy-style prominence: drop to the lowest valley before a higher peak
  std::vector<std::size_t> prominent;
  for (std::size_t idx : candidates) {
    double left_min = v[idx];
    for (std::size_t j = idx; j-- > 0;) {
      if (v[j] > v[idx]) break;
      left_min = std::min(left_min, v[j]);
    }
    double right_min = v[idx];
    for (std::size_t j = idx + 1; j < n; ++j) {
      if (v[j] > v[idx]) break;
      right_min = std::min(right_min, v[j]);
    }
    if (v[idx] - std::max(left_min, right_min) >= min_prom) {
      prominent.push_back(idx);
    }
  }
  // enforce the separation keeping the taller peak
  std::vector<std::size_t> order(prominent.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return v[prominent[a]] > v[prominent[b]];
  });
  std::vector<std::size_t> kept;
  for (std::size_t oi : order) {
    const std::size_t idx = prominent[oi];
    bool ok = true;
    for (std::size_t k : kept) {
      if (std::abs(static_cast<double>(idx) - static_cast<double>(k)) <
          min_sep) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(idx);
  }
  std::sort(kept.begin(), kept.end());
  if (kept.size() < 2) {
    throw UndefinedHrError("hr_peaks: fewer than two peaks detected");
  }
  const double span =
      static_cast<double>(kept.back()) - static_cast<double>(kept.front());
  const double mean_interval_s =
      span / static_cast<double>(kept.size() - 1) / x.fps;
  return 60.0 / mean_interval_s;
}

MetricAggregates metrics(const std::vector<double>& est,
                         const std::vector<double>& gt) {
  require(est.size() == gt.size(), "metrics: estimate/truth length mismatch");
  require(est.size() >= 2, "metrics: need at least 2 pairs for correlation");
  MetricAggregates m;
  m.count = static_cast<std::int64_t>(est.size());
  double se = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    require(gt[i] > 0, "metrics: MAPE requires positive ground truth");
    const double e = est[i] - gt[i];
    m.mae += std::abs(e);
    m.mape += std::abs(e) / gt[i];
    se += e * e;
  }
  const double n = static_cast<double>(est.size());
  m.mae /= n;
  m.mape = 100.0 * m.mape / n;
  m.rmse = std::sqrt(se / n);

  const double me = std::accumulate(est.begin(), est.end(), 0.0) / n;
  const double mg = std::accumulate(gt.begin(), gt.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    sxy += (est[i] - me) * (gt[i] - mg);
    sxx += (est[i] - me) * (est[i] - me);
    syy += (gt[i] - mg) * (gt[i] - mg);
  }
  const double denom = std::sqrt(sxx * syy);
  m.pearson = denom > 1e-24 ? sxy / denom : 0.0;
  return m;
}

MetricAggregates EvalReport::aggregate(const std::string& method) const {
  std::vector<double> est, gt;
  for (const auto& r : rows) {
    if (r.method == method) {
      est.push_back(r.hr_est);
      gt.push_back(r.hr_gt);
    }
  }
  return metrics(est, gt);
}

std::vector<std::string> EvalReport::methods() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.method) == out.end()) {
      out.push_back(r.method);
    }
  }
  return out;
}

void EvalReport::write_csv(std::ostream& os) const {
  os << "clip_id,hr_est,hr_gt,method\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    os << r.clip_id << ',' << r.hr_est << ',' << r.hr_gt << ',' << r.method
       << '\n';
  }
}

std::string EvalReport::aggregates_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& method : methods()) {
    const MetricAggregates m = aggregate(method);
    j[method] = {{"mae", m.mae},
                 {"mape", m.mape},
                 {"rmse", m.rmse},
                 {"pearson", m.pearson},
                 {"count", m.count}};
  }
  return j.dump(2);
}

}  // namespace pulseforge
