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

#include <Eigen/Dense>
#include <cstring>
#include <memory>
#include <vector>

#include "pulseforge/ops.hpp"
#include "pulseforge/tensor.hpp"

namespace pulseforge {
namespace ops {

enum class Padding { kSame, kValid };

namespace detail_ops {

/// Lowered convolution operand: col is [Cin*k*k, N*Ho*Wo] row-major. Every
/// output element is written exactly once, so no pre-zeroing is needed.
template <typename S>
void im2col(const S* x, std::int64_t n_frames, std::int64_t cin,
            std::int64_t h, std::int64_t w, std::int64_t k, std::int64_t pad,
            std::int64_t ho, std::int64_t wo, S* col) {
  const std::int64_t cols = n_frames * ho * wo;
  for (std::int64_t c = 0; c < cin; ++c) {
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        const std::int64_t r = (c * k + ky) * k + kx;
        S* crow = col + r * cols;
        for (std::int64_t n = 0; n < n_frames; ++n) {
          const S* xframe = x + (n * cin + c) * h * w;
          S* dst = crow + n * ho * wo;
          for (std::int64_t oy = 0; oy < ho; ++oy, dst += wo) {
            const std::int64_t iy = oy + ky - pad;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + wo, S(0));
              continue;
            }
            const std::int64_t ix0 = kx - pad;  // input x at ox = 0
            const std::int64_t lo = std::max<std::int64_t>(0, -ix0);
            const std::int64_t hi = std::min<std::int64_t>(wo, w - ix0);
            if (lo > 0) std::fill(dst, dst + lo, S(0));
            if (hi > lo)
              std::memcpy(dst + lo, xframe + iy * w + ix0 + lo,
                          sizeof(S) * static_cast<std::size_t>(hi - lo));
            if (hi < wo) std::fill(dst + std::max(hi, lo), dst + wo, S(0));
          }
        }
      }
    }
  }
}

/// Transpose of im2col: accumulates dcol back into dx.
template <typename S>
void col2im_acc(const S* dcol, std::int64_t n_frames, std::int64_t cin,
                std::int64_t h, std::int64_t w, std::int64_t k,
                std::int64_t pad, std::int64_t ho, std::int64_t wo, S* dx) {
  const std::int64_t cols = n_frames * ho * wo;
  for (std::int64_t c = 0; c < cin; ++c) {
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        const std::int64_t r = (c * k + ky) * k + kx;
        const S* crow = dcol + r * cols;
        for (std::int64_t n = 0; n < n_frames; ++n) {
          S* xframe = dx + (n * cin + c) * h * w;
          const S* src = crow + n * ho * wo;
          for (std::int64_t oy = 0; oy < ho; ++oy, src += wo) {
            const std::int64_t iy = oy + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const std::int64_t ix0 = kx - pad;
            const std::int64_t lo = std::max<std::int64_t>(0, -ix0);
            const std::int64_t hi = std::min<std::int64_t>(wo, w - ix0);
            S* xrow = xframe + iy * w + ix0;
            for (std::int64_t ox = lo; ox < hi; ++ox) xrow[ox] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail_ops

/// 2D cross-correlation: x [N,Cin,H,W], w [Cout,Cin,k,k], b [Cout].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 Padding padding = Padding::kSame) {
  require(x.ndim() == 4 && w.ndim() == 4 && b.ndim() == 1,
          "conv2d: expects x [N,Cin,H,W], w [Cout,Cin,k,k], b [Cout]");
  const auto N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto Cout = w.dim(0), k = w.dim(2);
  require(w.dim(1) == Cin, "conv2d: channel mismatch");
  require(w.dim(3) == k && k % 2 == 1, "conv2d: kernel must be square and odd");
  require(b.dim(0) == Cout, "conv2d: bias mismatch");
  const std::int64_t pad = padding == Padding::kSame ? (k - 1) / 2 : 0;
  const std::int64_t Ho = H + 2 * pad - k + 1, Wo = W + 2 * pad - k + 1;
  require(Ho >= 1 && Wo >= 1, "conv2d: kernel larger than padded input");

  const std::int64_t ck = Cin * k * k;
  const std::int64_t cols = N * Ho * Wo;
  auto col = std::make_shared<AlignedVec<S>>(
      static_cast<std::size_t>(ck * cols));
  detail_ops::im2col(x.data(), N, Cin, H, W, k, pad, Ho, Wo, col->data());

  Tensor<S> y = Tensor<S>::zeros({N, Cout, Ho, Wo});
  {
    // ymat [Cout, cols] lands directly in the output because the column
    // index (n*Ho*Wo + p) and the output layout [N,Cout,Ho,Wo] differ by a
    // per-frame block transpose; compute into a scratch and scatter.
    MatRM<S> ymat(Cout, cols);
    ymat.noalias() = ConstMatMap<S>(w.data(), Cout, ck) *
                     ConstMatMap<S>(col->data(), ck, cols);
    const std::int64_t plane = Ho * Wo;
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t co = 0; co < Cout; ++co) {
        Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(
            y.mutable_data() + (n * Cout + co) * plane, plane) =
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(
                ymat.data() + co * cols + n * plane, plane) +
            b[co];
      }
    }
  }

  auto xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node();
  const bool keep_col = detail_ops::wants(wn);
  if (!Tape<S>::current() || !keep_col) col.reset();
  pulseforge::detail::record_op(
      y,
      [xn, wn, bn, yn, col, N, Cin, H, W, Cout, k, pad, Ho, Wo, ck, cols] {
        const std::int64_t plane = Ho * Wo;
        // regroup output grad into [Cout, cols]
        MatRM<S> gmat(Cout, cols);
        for (std::int64_t n = 0; n < N; ++n) {
          for (std::int64_t co = 0; co < Cout; ++co) {
            std::memcpy(gmat.data() + co * cols + n * plane,
                        yn->grad.data() + (n * Cout + co) * plane,
                        sizeof(S) * static_cast<std::size_t>(plane));
          }
        }
        if (detail_ops::wants(bn)) {
          bn->ensure_grad();
          for (std::int64_t co = 0; co < Cout; ++co) {
            bn->grad[static_cast<std::size_t>(co)] += gmat.row(co).sum();
          }
        }
        if (detail_ops::wants(wn)) {
          wn->ensure_grad();
          MatMap<S>(wn->grad.data(), Cout, ck).noalias() +=
              gmat * ConstMatMap<S>(col->data(), ck, cols).transpose();
        }
        if (detail_ops::wants(xn)) {
          xn->ensure_grad();
          MatRM<S> dcol(ck, cols);
          dcol.noalias() =
              ConstMatMap<S>(wn->value.data(), Cout, ck).transpose() * gmat;
          detail_ops::col2im_acc(dcol.data(), N, Cin, H, W, k, pad, Ho, Wo,
                                 xn->grad.data());
        }
      },
      x, w, b);
  return y;
}

/// 2x2 average pooling with stride 2; trailing odd row/column is dropped.
template <typename S>
Tensor<S> avgpool2d(const Tensor<S>& x) {
  require(x.ndim() == 4, "avgpool2d: expects [N,C,H,W]");
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto Ho = H / 2, Wo = W / 2;
  require(Ho >= 1 && Wo >= 1, "avgpool2d: input too small");
  Tensor<S> y = Tensor<S>::zeros({N, C, Ho, Wo});
  const S* xp = x.data();
  S* yp = y.mutable_data();
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* xf = xp + nc * H * W;
    S* yf = yp + nc * Ho * Wo;
    for (std::int64_t oy = 0; oy < Ho; ++oy) {
      const S* r0 = xf + (2 * oy) * W;
      const S* r1 = r0 + W;
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        yf[oy * Wo + ox] =
            (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) *
            S(0.25);
      }
    }
  }
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, N, C, H, W, Ho, Wo] {
        if (!detail_ops::wants(xn)) return;
        xn->ensure_grad();
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
          S* gx = xn->grad.data() + nc * H * W;
          const S* gy = yn->grad.data() + nc * Ho * Wo;
          for (std::int64_t oy = 0; oy < Ho; ++oy) {
            S* r0 = gx + (2 * oy) * W;
            S* r1 = r0 + W;
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
              const S g = gy[oy * Wo + ox] * S(0.25);
              r0[2 * ox] += g;
              r0[2 * ox + 1] += g;
              r1[2 * ox] += g;
              r1[2 * ox + 1] += g;
            }
          }
        }
      },
      x);
  return y;
}

/// Per-channel batch normalization over (N,H,W) with learnable affine.
/// Train mode standardizes with batch statistics and updates the running
/// buffers in place; eval mode standardizes with the running buffers.
/// A zero-variance channel is absorbed by eps rather than erroring.
template <typename S>
Tensor<S> batchnorm2d(const Tensor<S>& x, const Tensor<S>& gamma,
                      const Tensor<S>& beta, std::vector<S>& running_mean,
                      std::vector<S>& running_var, bool train,
                      S momentum = S(0.1), S eps = S(1e-5)) {
  require(x.ndim() == 4, "batchnorm2d: expects [N,C,H,W]");
  const auto N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  require(gamma.size() == C && beta.size() == C,
          "batchnorm2d: affine size mismatch");
  require(static_cast<std::int64_t>(running_mean.size()) == C &&
              static_cast<std::int64_t>(running_var.size()) == C,
          "batchnorm2d: running stats size mismatch");
  const std::int64_t M = N * plane;  // samples per channel
  if (train) require(M >= 2, "batchnorm2d: train mode needs N*H*W >= 2");

  Tensor<S> y = Tensor<S>::zeros(x.shape());
  auto xhat = std::make_shared<AlignedVec<S>>(
      static_cast<std::size_t>(x.size()));
  auto invstd = std::make_shared<std::vector<S>>(static_cast<std::size_t>(C));

  for (std::int64_t c = 0; c < C; ++c) {
    S mu, var;
    if (train) {
      S acc = 0, acc2 = 0;
      for (std::int64_t n = 0; n < N; ++n) {
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> v(
            x.data() + (n * C + c) * plane, plane);
        acc += v.sum();
        acc2 += v.square().sum();
      }
      mu = acc / static_cast<S>(M);
      var = acc2 / static_cast<S>(M) - mu * mu;
      if (var < S(0)) var = S(0);  // numeric floor
      running_mean[static_cast<std::size_t>(c)] =
          (S(1) - momentum) * running_mean[static_cast<std::size_t>(c)] +
          momentum * mu;
      const S unbiased = M > 1 ? var * static_cast<S>(M) / static_cast<S>(M - 1)
                               : var;
      running_var[static_cast<std::size_t>(c)] =
          (S(1) - momentum) * running_var[static_cast<std::size_t>(c)] +
          momentum * unbiased;
    } else {
      mu = running_mean[static_cast<std::size_t>(c)];
      var = running_var[static_cast<std::size_t>(c)];
    }
    const S is = S(1) / std::sqrt(var + eps);
    (*invstd)[static_cast<std::size_t>(c)] = is;
    const S g = gamma[c], bshift = beta[c];
    for (std::int64_t n = 0; n < N; ++n) {
      const auto off = (n * C + c) * plane;
      Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> v(x.data() + off,
                                                             plane);
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> xh(xhat->data() + off,
                                                        plane);
      xh = (v - mu) * is;
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(y.mutable_data() + off,
                                                     plane) = g * xh + bshift;
    }
  }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, gn, bn, yn, xhat, invstd, N, C, plane, M, train] {
        for (std::int64_t c = 0; c < C; ++c) {
          S sum_g = 0, sum_gx = 0;
          for (std::int64_t n = 0; n < N; ++n) {
            const auto off = (n * C + c) * plane;
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> g(
                yn->grad.data() + off, plane);
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> xh(
                xhat->data() + off, plane);
            sum_g += g.sum();
            sum_gx += (g * xh).sum();
          }
          if (detail_ops::wants(gn)) {
            gn->ensure_grad();
            gn->grad[static_cast<std::size_t>(c)] += sum_gx;
          }
          if (detail_ops::wants(bn)) {
            bn->ensure_grad();
            bn->grad[static_cast<std::size_t>(c)] += sum_g;
          }
          if (detail_ops::wants(xn)) {
            xn->ensure_grad();
            const S gam = gn->value[static_cast<std::size_t>(c)];
            const S is = (*invstd)[static_cast<std::size_t>(c)];
            const S mean_g = sum_g / static_cast<S>(M);
            const S mean_gx = sum_gx / static_cast<S>(M);
            for (std::int64_t n = 0; n < N; ++n) {
              const auto off = (n * C + c) * plane;
              Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> g(
                  yn->grad.data() + off, plane);
              Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> xh(
                  xhat->data() + off, plane);
              Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> gx(
                  xn->grad.data() + off, plane);
              if (train) {
                gx += gam * is * (g - mean_g - xh * mean_gx);
              } else {
                gx += gam * is * g;
              }
            }
          }
        }
      },
      x, gamma, beta);
  return y;
}

}  // namespace ops
}  // namespace pulseforge
