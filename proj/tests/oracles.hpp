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

// Test-only oracles. Everything here is independent of the library's
// backward pass: gradients come from central finite differences over the
// forward computation alone, and the shift oracle is a direct transcription
// of the definition.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "pulseforge/rng.hpp"
#include "pulseforge/tensor.hpp"

namespace oracles {

using pulseforge::RngStream;
using pulseforge::Shape;
using pulseforge::Tape;
using pulseforge::Tensor;

/// Central finite differences of a scalar-valued forward function with
/// respect to `wrt`, evaluated with no tape active.
inline std::vector<double> finite_diff(
    const std::function<double()>& forward, Tensor<double>& wrt,
    double eps = 1e-5) {
  std::vector<double> g(static_cast<std::size_t>(wrt.size()));
  for (std::int64_t i = 0; i < wrt.size(); ++i) {
    const double saved = wrt.data()[i];
    wrt.mutable_data()[i] = saved + eps;
    const double hi = forward();
    wrt.mutable_data()[i] = saved - eps;
    const double lo = forward();
    wrt.mutable_data()[i] = saved;
    g[static_cast<std::size_t>(i)] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

/// Max relative error between an analytic gradient and its finite-difference
/// estimate, with an absolute floor so near-zero entries compare sanely.
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& numeric,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

/// Runs loss_fn under a fresh tape, backprops, and compares the gradient of
/// `wrt` against central finite differences of the same loss.
inline double gradcheck(const std::function<Tensor<double>()>& loss_fn,
                        Tensor<double>& wrt, double eps = 1e-5) {
  wrt.set_requires_grad(true);
  wrt.zero_grad();  // leaf grads accumulate across backward calls by contract
  Tape<double> tape;
  {
    Tape<double>::Scope scope(tape);
    Tensor<double> loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<double> analytic(wrt.grad().begin(), wrt.grad().end());
  auto numeric = finite_diff([&] { return loss_fn().item(); }, wrt, eps);
  return max_rel_error(analytic, numeric);
}

inline Tensor<double> random_tensor(Shape shape, RngStream& rng,
                                    double scale = 1.0) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.mutable_data()[i] = rng.uniform(-scale, scale);
  }
  return t;
}

/// Definitional temporal shift: three channel chunks of size C/fold_div;
/// chunk 0 advanced one frame, chunk 1 delayed, remainder untouched.
inline std::vector<double> shift_oracle(const Tensor<double>& xt,
                                        std::int64_t n, std::int64_t c,
                                        std::int64_t plane, int fold_div) {
  const double* x = xt.data();
  std::vector<double> y(static_cast<std::size_t>(xt.size()), 0.0);
  const std::int64_t fold = c / fold_div;
  for (std::int64_t t = 0; t < n; ++t) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      std::int64_t src = t;
      if (ch < fold) {
        src = t + 1;
      } else if (ch < 2 * fold) {
        src = t - 1;
      }
      if (src < 0 || src >= n) continue;
      for (std::int64_t p = 0; p < plane; ++p) {
        y[static_cast<std::size_t>((t * c + ch) * plane + p)] =
            x[(src * c + ch) * plane + p];
      }
    }
  }
  return y;
}

}  // namespace oracles
