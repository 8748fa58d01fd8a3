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

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pulseforge/common.hpp"

namespace pulseforge {

/// 1-D waveform with its sampling rate; the value flowing through
/// post-processing.
struct PulseTrace {
  enum class Kind { kRaw, kDerivative, kFiltered };

  std::vector<double> samples;
  double fps = 0.0;
  Kind kind = Kind::kRaw;

  double duration_s() const {
    return fps > 0 ? static_cast<double>(samples.size()) / fps : 0.0;
  }
};

/// Zero-phase 2nd-order Butterworth band-pass (applied forward and backward).
/// Defaults to the 0.75-2.5 Hz heart-rate band.
PulseTrace bandpass(const PulseTrace& x, double lo_hz = 0.75,
                    double hi_hz = 2.5);

/// HR from the magnitude-spectrum argmax inside [0.75, 2.5] Hz, after
/// mean subtraction and zero-padding to at least 600*fps samples
/// (bin width <= 0.1 BPM). Throws UndefinedHrError on an all-zero signal.
double hr_fft(const PulseTrace& x, double lo_hz = 0.75, double hi_hz = 2.5);

/// HR from the mean inter-peak interval. Peaks are local maxima at least
/// fps/2.5 samples apart with prominence >= 0.3 * signal std.
double hr_peaks(const PulseTrace& x);

/// Aggregate error metrics over per-clip HR estimates.
struct MetricAggregates {
  double mae = 0.0;
  double mape = 0.0;  // percent
  double rmse = 0.0;
  double pearson = 0.0;
  std::int64_t count = 0;
};

MetricAggregates metrics(const std::vector<double>& est,
                         const std::vector<double>& gt);

/// Per-clip HR estimates with ground truth, plus per-method aggregates.
struct EvalReport {
  struct Row {
    std::string clip_id;
    double hr_est;
    double hr_gt;
    std::string method;
  };

  std::vector<Row> rows;

  void add(const std::string& clip_id, double est, double gt,
           const std::string& method) {
    rows.push_back({clip_id, est, gt, method});
  }

  /// Aggregates recomputed from the rows of one method.
  MetricAggregates aggregate(const std::string& method) const;
  std::vector<std::string> methods() const;

  /// CSV with the fixed column order: clip_id, hr_est, hr_gt, method.
  void write_csv(std::ostream& os) const;
  /// JSON object keyed by method with {mae, mape, rmse, pearson, count}.
  std::string aggregates_json() const;
};

}  // namespace pulseforge
