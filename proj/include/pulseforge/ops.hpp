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
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "pulseforge/rng.hpp"
#include "pulseforge/tensor.hpp"

namespace pulseforge {
namespace ops {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<MatRM<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const MatRM<S>>;

namespace detail_ops {

template <typename S>
bool wants(const std::shared_ptr<pulseforge::detail::TensorNode<S>>& n) {
  return n->requires_grad || n->on_tape;
}

}  // namespace detail_ops

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.mutable_array() = a.array() + b.array();
  auto an = a.node(), bn = b.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [an, bn, yn] {
        auto g = pulseforge::detail::out_grad_map(yn);
        if (detail_ops::wants(an)) pulseforge::detail::grad_map(an) += g;
        if (detail_ops::wants(bn)) pulseforge::detail::grad_map(bn) += g;
      },
      a, b);
  return y;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.mutable_array() = a.array() * b.array();
  auto an = a.node(), bn = b.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [an, bn, yn] {
        auto g = pulseforge::detail::out_grad_map(yn);
        if (detail_ops::wants(an))
          pulseforge::detail::grad_map(an) +=
              g * pulseforge::detail::value_map(bn);
        if (detail_ops::wants(bn))
          pulseforge::detail::grad_map(bn) +=
              g * pulseforge::detail::value_map(an);
      },
      a, b);
  return y;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.mutable_array() = a.array() - b.array();
  auto an = a.node(), bn = b.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [an, bn, yn] {
        auto g = pulseforge::detail::out_grad_map(yn);
        if (detail_ops::wants(an)) pulseforge::detail::grad_map(an) += g;
        if (detail_ops::wants(bn)) pulseforge::detail::grad_map(bn) -= g;
      },
      a, b);
  return y;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.mutable_array() = x.array() * c;
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, c] {
        if (!detail_ops::wants(xn)) return;
        pulseforge::detail::grad_map(xn) +=
            pulseforge::detail::out_grad_map(yn) * c;
      },
      x);
  return y;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.mutable_array() = x.array().tanh();
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn] {
        if (!detail_ops::wants(xn)) return;
        auto yv = pulseforge::detail::value_map(yn);
        pulseforge::detail::grad_map(xn) +=
            pulseforge::detail::out_grad_map(yn) * (S(1) - yv.square());
      },
      x);
  return y;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.mutable_array() = S(1) / (S(1) + (-x.array()).exp());
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn] {
        if (!detail_ops::wants(xn)) return;
        auto yv = pulseforge::detail::value_map(yn);
        pulseforge::detail::grad_map(xn) +=
            pulseforge::detail::out_grad_map(yn) * yv * (S(1) - yv);
      },
      x);
  return y;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.mutable_array() = x.array().max(S(0));
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn] {
        if (!detail_ops::wants(xn)) return;
        auto xv = pulseforge::detail::value_map(xn);
        pulseforge::detail::grad_map(xn) +=
            pulseforge::detail::out_grad_map(yn) *
            (xv > S(0)).template cast<S>();
      },
      x);
  return y;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::scalar(x.array().sum());
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn] {
        if (!detail_ops::wants(xn)) return;
        pulseforge::detail::grad_map(xn) += yn->grad[0];
      },
      x);
  return y;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  const S inv = S(1) / static_cast<S>(x.size());
  Tensor<S> y = Tensor<S>::scalar(x.array().sum() * inv);
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, inv] {
        if (!detail_ops::wants(xn)) return;
        pulseforge::detail::grad_map(xn) += yn->grad[0] * inv;
      },
      x);
  return y;
}

/// Mean over the middle axis of a rank-3 view: [A,B,C] -> [A,C].
template <typename S>
Tensor<S> mean_axis1(const Tensor<S>& x, std::int64_t a, std::int64_t b,
                     std::int64_t c) {
  require(a * b * c == x.size(), "mean_axis1: view does not match size");
  Tensor<S> y = Tensor<S>::zeros({a, c});
  const S inv = S(1) / static_cast<S>(b);
  const S* xp = x.data();
  S* yp = y.mutable_data();
  for (std::int64_t i = 0; i < a; ++i) {
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic,
                                  Eigen::RowMajor>>
        block(xp + i * b * c, b, c);
    Eigen::Map<Eigen::Array<S, 1, Eigen::Dynamic>> row(yp + i * c, c);
    row = block.colwise().sum() * inv;
  }
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, a, b, c, inv] {
        if (!detail_ops::wants(xn)) return;
        xn->ensure_grad();
        for (std::int64_t i = 0; i < a; ++i) {
          Eigen::Map<Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic,
                                  Eigen::RowMajor>>
              gx(xn->grad.data() + i * b * c, b, c);
          Eigen::Map<const Eigen::Array<S, 1, Eigen::Dynamic>> gy(
              yn->grad.data() + i * c, c);
          gx.rowwise() += gy * inv;
        }
      },
      x);
  return y;
}

// ---------------------------------------------------------------------------
// Linear layers
// ---------------------------------------------------------------------------

/// x [B,F] @ w [F,O] + bias [O].
template <typename S>
Tensor<S> dense(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  require(x.ndim() == 2 && w.ndim() == 2 && b.ndim() == 1,
          "dense: expects x [B,F], w [F,O], b [O]");
  const auto B = x.dim(0), F = x.dim(1), O = w.dim(1);
  require(w.dim(0) == F && b.dim(0) == O, "dense: shape mismatch");
  Tensor<S> y = Tensor<S>::zeros({B, O});
  ConstMatMap<S> xm(x.data(), B, F), wm(w.data(), F, O);
  MatMap<S> ym(y.mutable_data(), B, O);
  ym.noalias() = xm * wm;
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(
      b.data(), O);
  auto xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, wn, bn, yn, B, F, O] {
        ConstMatMap<S> g(yn->grad.data(), B, O);
        ConstMatMap<S> xm2(xn->value.data(), B, F);
        ConstMatMap<S> wm2(wn->value.data(), F, O);
        if (detail_ops::wants(xn)) {
          xn->ensure_grad();
          MatMap<S>(xn->grad.data(), B, F).noalias() += g * wm2.transpose();
        }
        if (detail_ops::wants(wn)) {
          wn->ensure_grad();
          MatMap<S>(wn->grad.data(), F, O).noalias() += xm2.transpose() * g;
        }
        if (detail_ops::wants(bn)) {
          bn->ensure_grad();
          Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(bn->grad.data(), O) +=
              g.colwise().sum();
        }
      },
      x, w, b);
  return y;
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes");
  const auto M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor<S> y = Tensor<S>::zeros({M, N});
  MatMap<S>(y.mutable_data(), M, N).noalias() =
      ConstMatMap<S>(a.data(), M, K) * ConstMatMap<S>(b.data(), K, N);
  auto an = a.node(), bn = b.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [an, bn, yn, M, K, N] {
        ConstMatMap<S> g(yn->grad.data(), M, N);
        if (detail_ops::wants(an)) {
          an->ensure_grad();
          MatMap<S>(an->grad.data(), M, K).noalias() +=
              g * ConstMatMap<S>(bn->value.data(), K, N).transpose();
        }
        if (detail_ops::wants(bn)) {
          bn->ensure_grad();
          MatMap<S>(bn->grad.data(), K, N).noalias() +=
              ConstMatMap<S>(an->value.data(), M, K).transpose() * g;
        }
      },
      a, b);
  return y;
}

/// Batched a [B,M,K] @ b [B,K,N] -> [B,M,N].
template <typename S>
Tensor<S> bmm_nn(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) &&
              a.dim(2) == b.dim(1),
          "bmm_nn: incompatible shapes");
  const auto B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  Tensor<S> y = Tensor<S>::zeros({B, M, N});
  for (std::int64_t i = 0; i < B; ++i) {
    MatMap<S>(y.mutable_data() + i * M * N, M, N).noalias() =
        ConstMatMap<S>(a.data() + i * M * K, M, K) *
        ConstMatMap<S>(b.data() + i * K * N, K, N);
  }
  auto an = a.node(), bn = b.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [an, bn, yn, B, M, K, N] {
        for (std::int64_t i = 0; i < B; ++i) {
          ConstMatMap<S> g(yn->grad.data() + i * M * N, M, N);
          if (detail_ops::wants(an)) {
            an->ensure_grad();
            MatMap<S>(an->grad.data() + i * M * K, M, K).noalias() +=
                g * ConstMatMap<S>(bn->value.data() + i * K * N, K, N)
                        .transpose();
          }
          if (detail_ops::wants(bn)) {
            bn->ensure_grad();
            MatMap<S>(bn->grad.data() + i * K * N, K, N).noalias() +=
                ConstMatMap<S>(an->value.data() + i * M * K, M, K)
                    .transpose() *
                g;
          }
        }
      },
      a, b);
  return y;
}

/// Batched a [B,M,K] @ b [B,N,K]^T -> [B,M,N]; the attention-score product.
template <typename S>
Tensor<S> bmm_nt(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) &&
              a.dim(2) == b.dim(2),
          "bmm_nt: incompatible shapes");
  const auto B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
  Tensor<S> y = Tensor<S>::zeros({B, M, N});
  for (std::int64_t i = 0; i < B; ++i) {
    MatMap<S>(y.mutable_data() + i * M * N, M, N).noalias() =
        ConstMatMap<S>(a.data() + i * M * K, M, K) *
        ConstMatMap<S>(b.data() + i * N * K, N, K).transpose();
  }
  auto an = a.node(), bn = b.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [an, bn, yn, B, M, K, N] {
        for (std::int64_t i = 0; i < B; ++i) {
          ConstMatMap<S> g(yn->grad.data() + i * M * N, M, N);
          if (detail_ops::wants(an)) {
            an->ensure_grad();
            MatMap<S>(an->grad.data() + i * M * K, M, K).noalias() +=
                g * ConstMatMap<S>(bn->value.data() + i * N * K, N, K);
          }
          if (detail_ops::wants(bn)) {
            bn->ensure_grad();
            MatMap<S>(bn->grad.data() + i * N * K, N, K).noalias() +=
                g.transpose() *
                ConstMatMap<S>(an->value.data() + i * M * K, M, K);
          }
        }
      },
      a, b);
  return y;
}

// ---------------------------------------------------------------------------
// Normalizations
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
  const auto D = x.shape().back();
  const auto R = x.size() / D;
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  for (std::int64_t r = 0; r < R; ++r) {
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> row(x.data() + r * D,
                                                             D);
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> out(
        y.mutable_data() + r * D, D);
    out = (row - row.maxCoeff()).exp();
    out /= out.sum();
  }
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, R, D] {
        if (!detail_ops::wants(xn)) return;
        xn->ensure_grad();
        for (std::int64_t r = 0; r < R; ++r) {
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> yv(
              yn->value.data() + r * D, D);
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> g(
              yn->grad.data() + r * D, D);
          Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> gx(
              xn->grad.data() + r * D, D);
          const S dot = (g * yv).sum();
          gx += yv * (g - dot);
        }
      },
      x);
  return y;
}

/// Layer normalization over the last axis with per-feature affine.
template <typename S>
Tensor<S> layernorm_lastdim(const Tensor<S>& x, const Tensor<S>& gamma,
                            const Tensor<S>& beta, S eps = S(1e-5)) {
  const auto D = x.shape().back();
  require(gamma.size() == D && beta.size() == D, "layernorm: affine mismatch");
  const auto R = x.size() / D;
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  // Cache x_hat for the backward pass.
  auto xhat = std::make_shared<AlignedVec<S>>(
      static_cast<std::size_t>(x.size()));
  auto invstd = std::make_shared<std::vector<S>>(static_cast<std::size_t>(R));
  Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> gm(gamma.data(), D),
      bm(beta.data(), D);
  for (std::int64_t r = 0; r < R; ++r) {
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> row(x.data() + r * D,
                                                             D);
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> xh(xhat->data() + r * D, D);
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> out(
        y.mutable_data() + r * D, D);
    const S mu = row.mean();
    const S var = (row - mu).square().mean();
    const S is = S(1) / std::sqrt(var + eps);
    (*invstd)[static_cast<std::size_t>(r)] = is;
    xh = (row - mu) * is;
    out = gm * xh + bm;
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, gn, bn, yn, xhat, invstd, R, D] {
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> gm2(
            gn->value.data(), D);
        for (std::int64_t r = 0; r < R; ++r) {
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> g(
              yn->grad.data() + r * D, D);
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> xh(
              xhat->data() + r * D, D);
          if (detail_ops::wants(gn)) {
            gn->ensure_grad();
            Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(gn->grad.data(),
                                                           D) += g * xh;
          }
          if (detail_ops::wants(bn)) {
            bn->ensure_grad();
            Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(bn->grad.data(),
                                                           D) += g;
          }
          if (detail_ops::wants(xn)) {
            xn->ensure_grad();
            Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> gx(
                xn->grad.data() + r * D, D);
            const Eigen::Array<S, Eigen::Dynamic, 1> dxh = g * gm2;
            const S m1 = dxh.mean();
            const S m2 = (dxh * xh).mean();
            gx += (dxh - m1 - xh * m2) * (*invstd)[static_cast<std::size_t>(r)];
          }
        }
      },
      x, gamma, beta);
  return y;
}

// ---------------------------------------------------------------------------
// Regularization
// ---------------------------------------------------------------------------

/// Inverted dropout driven by a caller-owned counter stream, so a fixed seed
/// reproduces masks bit-exactly. Identity when !train or p == 0.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, RngStream& rng, bool train) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (!train || p == 0.0) return x;
  const S keep_scale = S(1.0 / (1.0 - p));
  auto mask = std::make_shared<AlignedVec<S>>(
      static_cast<std::size_t>(x.size()));
  for (auto& m : *mask) m = rng.uniform() >= p ? keep_scale : S(0);
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> mm(mask->data(),
                                                          x.size());
  y.mutable_array() = x.array() * mm;
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, mask] {
        if (!detail_ops::wants(xn)) return;
        Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> mm2(
            mask->data(), static_cast<Eigen::Index>(mask->size()));
        pulseforge::detail::grad_map(xn) +=
            pulseforge::detail::out_grad_map(yn) * mm2;
      },
      x);
  return y;
}

// ---------------------------------------------------------------------------
// Temporal shift
// ---------------------------------------------------------------------------

namespace detail_ops {

/// Shared kernel for the forward shift and its transpose. advance moves data
/// from frame n+1 into frame n (first chunk forward); the transpose swaps the
/// chunk directions.
template <typename S>
void shift_kernel(const S* in, S* out, std::int64_t n_frames,
                  std::int64_t channels, std::int64_t plane, std::int64_t fold,
                  bool transpose, bool accumulate) {
  auto block = [&](std::int64_t n, std::int64_t c0) {
    return (n * channels + c0) * plane;
  };
  const std::int64_t c_rest = 2 * fold;
  for (std::int64_t n = 0; n < n_frames; ++n) {
    // chunk 0: advance in time (transpose: delay)
    std::int64_t src0 = transpose ? n - 1 : n + 1;
    // chunk 1: delay in time (transpose: advance)
    std::int64_t src1 = transpose ? n + 1 : n - 1;
    auto emit = [&](std::int64_t c0, std::int64_t len, std::int64_t src) {
      S* dst = out + block(n, c0);
      if (src < 0 || src >= n_frames) {
        if (!accumulate) std::fill(dst, dst + len * plane, S(0));
        return;
      }
      const S* s = in + block(src, c0);
      if (accumulate) {
        Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(dst, len * plane) +=
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(s,
                                                                 len * plane);
      } else {
        std::memcpy(dst, s, sizeof(S) * static_cast<std::size_t>(len * plane));
      }
    };
    emit(0, fold, src0);
    emit(fold, fold, src1);
    emit(c_rest, channels - c_rest, n);
  }
}

}  // namespace detail_ops

/// Temporal shift over [N,C,H,W]: channels [0,C/fold_div) advance one frame,
/// the next C/fold_div delay one frame, the rest pass through. Vacated
/// boundary slots are zero-filled. Introduces no learnable parameters.
template <typename S>
Tensor<S> tensor_shift(const Tensor<S>& x, int fold_div = 3) {
  require(x.ndim() == 4, "tensor_shift: expects [N,C,H,W]");
  const auto N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  require(N >= 1, "tensor_shift: empty clip");
  require(C >= fold_div, "tensor_shift: C must be >= fold_div");
  const std::int64_t fold = C / fold_div;
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  detail_ops::shift_kernel(x.data(), y.mutable_data(), N, C, plane, fold,
                           /*transpose=*/false, /*accumulate=*/false);
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, N, C, plane, fold] {
        if (!detail_ops::wants(xn)) return;
        xn->ensure_grad();
        detail_ops::shift_kernel(yn->grad.data(), xn->grad.data(), N, C, plane,
                                 fold, /*transpose=*/true, /*accumulate=*/true);
      },
      x);
  return y;
}

/// tensor_shift semantics for token grids [T,G,D]: shift along T with the
/// channel chunks taken over the embedding dim D.
template <typename S>
Tensor<S> token_shift(const Tensor<S>& x, std::int64_t t, std::int64_t g,
                      std::int64_t d, int fold_div = 3) {
  require(t * g * d == x.size(), "token_shift: view does not match size");
  require(d >= fold_div, "token_shift: D must be >= fold_div");
  const std::int64_t fold = d / fold_div;
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const S* in = x.data();
  S* out = y.mutable_data();
  for (std::int64_t n = 0; n < t; ++n) {
    for (std::int64_t tok = 0; tok < g; ++tok) {
      S* dst = out + (n * g + tok) * d;
      auto copy_chunk = [&](std::int64_t c0, std::int64_t len,
                            std::int64_t src) {
        if (src < 0 || src >= t) return;  // dst already zero
        std::memcpy(dst + c0, in + (src * g + tok) * d + c0,
                    sizeof(S) * static_cast<std::size_t>(len));
      };
      copy_chunk(0, fold, n + 1);
      copy_chunk(fold, fold, n - 1);
      copy_chunk(2 * fold, d - 2 * fold, n);
    }
  }
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, t, g, d, fold] {
        if (!detail_ops::wants(xn)) return;
        xn->ensure_grad();
        S* gx = xn->grad.data();
        const S* gy = yn->grad.data();
        for (std::int64_t n = 0; n < t; ++n) {
          for (std::int64_t tok = 0; tok < g; ++tok) {
            S* dst = gx + (n * g + tok) * d;
            auto add_chunk = [&](std::int64_t c0, std::int64_t len,
                                 std::int64_t src) {
              if (src < 0 || src >= t) return;
              const S* s = gy + (src * g + tok) * d + c0;
              for (std::int64_t i = 0; i < len; ++i) dst[c0 + i] += s[i];
            };
            // transpose: chunk 0 pulled grad from the earlier frame
            add_chunk(0, fold, n - 1);
            add_chunk(fold, fold, n + 1);
            add_chunk(2 * fold, d - 2 * fold, n);
          }
        }
      },
      x);
  return y;
}

// ---------------------------------------------------------------------------
// Attention-mask helpers
// ---------------------------------------------------------------------------

/// y[n] = scale * s[n] / sum(s[n]) where the sum runs over everything but
/// the leading axis. Caller guarantees strictly positive s (sigmoid output).
template <typename S>
Tensor<S> frame_l1_normalize(const Tensor<S>& s, S scale) {
  const auto n_frames = s.dim(0);
  const auto per = s.size() / n_frames;
  Tensor<S> y = Tensor<S>::zeros(s.shape());
  auto denom = std::make_shared<std::vector<S>>(
      static_cast<std::size_t>(n_frames));
  for (std::int64_t n = 0; n < n_frames; ++n) {
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> sv(
        s.data() + n * per, per);
    const S d = sv.sum();
    (*denom)[static_cast<std::size_t>(n)] = d;
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(y.mutable_data() + n * per,
                                                   per) = sv * (scale / d);
  }
  auto sn = s.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [sn, yn, denom, n_frames, per, scale] {
        if (!detail_ops::wants(sn)) return;
        sn->ensure_grad();
        for (std::int64_t n = 0; n < n_frames; ++n) {
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> sv(
              sn->value.data() + n * per, per);
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> g(
              yn->grad.data() + n * per, per);
          Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> gs(
              sn->grad.data() + n * per, per);
          const S d = (*denom)[static_cast<std::size_t>(n)];
          const S gdot = (g * sv).sum();
          gs += scale * (g / d - gdot / (d * d));
        }
      },
      s);
  return y;
}

/// x [N,C,H,W] * mask [N,1,H,W], mask broadcast across channels.
template <typename S>
Tensor<S> mul_mask(const Tensor<S>& x, const Tensor<S>& m) {
  require(x.ndim() == 4 && m.ndim() == 4 && m.dim(1) == 1 &&
              x.dim(0) == m.dim(0) && x.dim(2) == m.dim(2) &&
              x.dim(3) == m.dim(3),
          "mul_mask: expects x [N,C,H,W] and mask [N,1,H,W]");
  const auto N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  for (std::int64_t n = 0; n < N; ++n) {
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> mm(
        m.data() + n * plane, plane);
    for (std::int64_t c = 0; c < C; ++c) {
      const auto off = (n * C + c) * plane;
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(y.mutable_data() + off,
                                                     plane) =
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(x.data() + off,
                                                               plane) *
          mm;
    }
  }
  auto xn = x.node(), mn = m.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, mn, yn, N, C, plane] {
        for (std::int64_t n = 0; n < N; ++n) {
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> mm(
              mn->value.data() + n * plane, plane);
          for (std::int64_t c = 0; c < C; ++c) {
            const auto off = (n * C + c) * plane;
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> g(
                yn->grad.data() + off, plane);
            if (detail_ops::wants(xn)) {
              xn->ensure_grad();
              Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(
                  xn->grad.data() + off, plane) += g * mm;
            }
            if (detail_ops::wants(mn)) {
              mn->ensure_grad();
              Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(
                  mn->grad.data() + n * plane, plane) +=
                  g * Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(
                          xn->value.data() + off, plane);
            }
          }
        }
      },
      x, m);
  return y;
}

// ---------------------------------------------------------------------------
// Index remapping (window partition/reverse, rolls, pads, slices)
// ---------------------------------------------------------------------------

/// Row gather over a [R,D] view: y.row(i) = rows[i] >= 0 ? x.row(rows[i]) : 0.
/// Backward scatter-adds rows through the same map.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& x, Shape out_shape,
                      std::shared_ptr<const std::vector<std::int64_t>> rows,
                      std::int64_t row_len) {
  require(x.size() % row_len == 0 && numel(out_shape) % row_len == 0,
          "gather_rows: row length does not divide the buffers");
  require(static_cast<std::int64_t>(rows->size()) ==
              numel(out_shape) / row_len,
          "gather_rows: map length must match output row count");
  Tensor<S> y = Tensor<S>::zeros(std::move(out_shape));
  const S* xp = x.data();
  S* yp = y.mutable_data();
  const auto& m = *rows;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] >= 0) {
      std::memcpy(yp + static_cast<std::int64_t>(i) * row_len,
                  xp + m[i] * row_len,
                  sizeof(S) * static_cast<std::size_t>(row_len));
    }
  }
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, rows, row_len] {
        if (!detail_ops::wants(xn)) return;
        xn->ensure_grad();
        S* gx = xn->grad.data();
        const S* gy = yn->grad.data();
        const auto& m2 = *rows;
        for (std::size_t i = 0; i < m2.size(); ++i) {
          if (m2[i] < 0) continue;
          Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(
              gx + m2[i] * row_len, row_len) +=
              Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(
                  gy + static_cast<std::int64_t>(i) * row_len, row_len);
        }
      },
      x);
  return y;
}

/// y[i] = map[i] >= 0 ? x[map[i]] : 0. Every nonnegative map entry must be
/// unique or absent; backward scatter-adds through the same map.
template <typename S>
Tensor<S> remap(const Tensor<S>& x, Shape out_shape,
                std::shared_ptr<const std::vector<std::int64_t>> map) {
  require(static_cast<std::int64_t>(map->size()) == numel(out_shape),
          "remap: map length must match output size");
  Tensor<S> y = Tensor<S>::zeros(std::move(out_shape));
  const S* xp = x.data();
  S* yp = y.mutable_data();
  const auto& m = *map;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] >= 0) yp[i] = xp[m[i]];
  }
  auto xn = x.node(), yn = y.node();
  pulseforge::detail::record_op(
      y,
      [xn, yn, map] {
        if (!detail_ops::wants(xn)) return;
        xn->ensure_grad();
        S* gx = xn->grad.data();
        const S* gy = yn->grad.data();
        const auto& m2 = *map;
        for (std::size_t i = 0; i < m2.size(); ++i) {
          if (m2[i] >= 0) gx[m2[i]] += gy[i];
        }
      },
      x);
  return y;
}

}  // namespace ops
}  // namespace pulseforge
