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

#include <cmath>

#include "oracles.hpp"
#include "pulseforge/conv.hpp"
#include "pulseforge/ops.hpp"
#include "pulseforge/tensor.hpp"

using namespace pulseforge;

namespace {
RngStream test_rng(std::uint64_t salt) { return RngStream(0xBEEF ^ salt); }
}  // namespace

TEST_CASE("tensor basics") {
  auto t = Tensor<float>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.dim(1) == 3);
  CHECK(t[4] == 5.0f);
  CHECK_THROWS_AS(Tensor<float>::from_data({2, 2}, {1, 2, 3}),
                  InvalidArgument);
  auto r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r[4] == 5.0f);
  CHECK_THROWS_AS(t.reshaped({5}), InvalidArgument);
}

TEST_CASE("tensor_shift matches the worked example") {
  // N=2, C=3, H=W=1; one channel per chunk.
  auto x = Tensor<float>::from_data({2, 3, 1, 1}, {1, 2, 3, 4, 5, 6});
  auto y = ops::tensor_shift(x, 3);
  CHECK(y[0] == 4.0f);  // (0,0): advanced
  CHECK(y[1] == 0.0f);  // (0,1): delayed, boundary zero
  CHECK(y[2] == 3.0f);  // (0,2): untouched
  CHECK(y[3] == 0.0f);  // (1,0): advanced, boundary zero
  CHECK(y[4] == 2.0f);  // (1,1): delayed
  CHECK(y[5] == 6.0f);  // (1,2): untouched
}

TEST_CASE("tensor_shift of zeros is zeros") {
  auto x = Tensor<float>::zeros({3, 6, 2, 2});
  auto y = ops::tensor_shift(x);
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0f);
}

TEST_CASE("tensor_shift rejects C < fold_div") {
  auto x = Tensor<float>::zeros({2, 2, 1, 1});
  CHECK_THROWS_AS(ops::tensor_shift(x, 3), InvalidArgument);
}

TEST_CASE("tensor_shift agrees with the definitional oracle") {
  auto rng = test_rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.uniform() * 6);
    const std::int64_t c = 3 + static_cast<std::int64_t>(rng.uniform() * 8);
    const std::int64_t h = 1 + static_cast<std::int64_t>(rng.uniform() * 4);
    auto x = oracles::random_tensor({n, c, h, h}, rng);
    auto y = ops::tensor_shift(x, 3);
    auto want = oracles::shift_oracle(x, n, c, h * h, 3);
    for (std::int64_t i = 0; i < y.size(); ++i) {
      CHECK(y[i] == doctest::Approx(want[static_cast<std::size_t>(i)])
                        .epsilon(1e-12));
    }
  }
}

TEST_CASE("tensor_shift is linear") {
  auto rng = test_rng(2);
  auto x = oracles::random_tensor({4, 6, 3, 3}, rng);
  auto y = oracles::random_tensor({4, 6, 3, 3}, rng);
  const double a = 1.7, b = -0.4;
  auto lhs = ops::tensor_shift(
      ops::add(ops::scale(x, a), ops::scale(y, b)), 3);
  auto rhs = ops::add(ops::scale(ops::tensor_shift(x, 3), a),
                      ops::scale(ops::tensor_shift(y, 3), b));
  for (std::int64_t i = 0; i < lhs.size(); ++i) {
    CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-12));
  }
}

TEST_CASE("tensor_shift zero channels at temporal boundaries") {
  auto rng = test_rng(3);
  const std::int64_t n = 5, c = 9, h = 2;
  auto x = oracles::random_tensor({n, c, h, h}, rng);
  // make sure no input value is zero so zeros must come from the boundary
  for (std::int64_t i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < 0.1) x.mutable_data()[i] = 0.5;
  }
  auto y = ops::tensor_shift(x, 3);
  const std::int64_t fold = c / 3, plane = h * h;
  std::int64_t zeros_first = 0, zeros_last = 0;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    bool all_zero_first = true, all_zero_last = true;
    for (std::int64_t p = 0; p < plane; ++p) {
      if (y[(0 * c + ch) * plane + p] != 0.0) all_zero_first = false;
      if (y[((n - 1) * c + ch) * plane + p] != 0.0) all_zero_last = false;
    }
    zeros_first += all_zero_first;
    zeros_last += all_zero_last;
  }
  CHECK(zeros_first == fold);
  CHECK(zeros_last == fold);
}

TEST_CASE("backward: sum gives ones, half sum-of-squares gives x") {
  auto rng = test_rng(4);
  auto x = oracles::random_tensor({3, 4}, rng);
  x.set_requires_grad(true);

  SUBCASE("loss = sum(x)") {
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    auto loss = ops::sum(x);
    tape.backward(loss);
    for (auto g : x.grad()) CHECK(g == doctest::Approx(1.0));
  }

  SUBCASE("loss = 0.5 * sum(x^2)") {
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    auto loss = ops::scale(ops::sum(ops::mul(x, x)), 0.5);
    tape.backward(loss);
    for (std::int64_t i = 0; i < x.size(); ++i) {
      CHECK(x.grad()[static_cast<std::size_t>(i)] ==
            doctest::Approx(x[i]).epsilon(1e-12));
    }
  }

  SUBCASE("repeated backward accumulates") {
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    auto loss = ops::sum(x);
    tape.backward(loss);
    tape.backward(loss);
    for (auto g : x.grad()) CHECK(g == doctest::Approx(2.0));
  }

  SUBCASE("non-scalar loss rejected") {
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    auto y = ops::scale(x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), InvalidArgument);
  }
}

TEST_CASE("primitive forward values") {
  auto z = Tensor<float>::scalar(0.0f);
  CHECK(ops::sigmoid(z).item() == doctest::Approx(0.5));
  CHECK(ops::tanh(z).item() == doctest::Approx(0.0));
  CHECK(ops::relu(Tensor<float>::scalar(-2.0f)).item() == 0.0f);

  // avgpool on a constant field is the constant
  auto c = Tensor<float>::full({1, 2, 4, 4}, 3.25f);
  auto p = ops::avgpool2d(c);
  CHECK(p.shape() == Shape{1, 2, 2, 2});
  for (std::int64_t i = 0; i < p.size(); ++i) CHECK(p[i] == 3.25f);
}

TEST_CASE("conv2d identity and all-ones examples") {
  auto rng = test_rng(5);
  // 1x1 identity kernel: output equals input
  auto x = oracles::random_tensor({2, 1, 3, 3}, rng);
  auto w = Tensor<double>::full({1, 1, 1, 1}, 1.0);
  auto b = Tensor<double>::zeros({1});
  auto y = ops::conv2d(x, w, b, ops::Padding::kSame);
  for (std::int64_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
  }

  // all-ones 3x3 input and kernel, valid padding: 9 + bias
  auto xo = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto wo = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto bo = Tensor<double>::from_data({1}, {0.5});
  auto yo = ops::conv2d(xo, wo, bo, ops::Padding::kValid);
  CHECK(yo.shape() == Shape{1, 1, 1, 1});
  CHECK(yo.item() == doctest::Approx(9.5));
}

TEST_CASE("conv2d rejects shape mismatches") {
  auto x = Tensor<float>::zeros({1, 3, 4, 4});
  auto w = Tensor<float>::zeros({8, 4, 3, 3});  // wrong Cin
  auto b = Tensor<float>::zeros({8});
  CHECK_THROWS_AS(ops::conv2d(x, w, b), InvalidArgument);
  auto w2 = Tensor<float>::zeros({8, 3, 2, 2});  // even kernel
  CHECK_THROWS_AS(ops::conv2d(x, w2, b), InvalidArgument);
}

TEST_CASE("conv2d gradients match finite differences") {
  auto rng = test_rng(6);
  auto x = oracles::random_tensor({2, 2, 5, 5}, rng);
  auto w = oracles::random_tensor({3, 2, 3, 3}, rng);
  auto b = oracles::random_tensor({3}, rng);
  // weight the output so the loss is not permutation-blind
  auto mix = oracles::random_tensor({2, 3, 5, 5}, rng);
  auto loss_fn = [&] {
    return ops::sum(ops::mul(ops::conv2d(x, w, b, ops::Padding::kSame), mix));
  };
  CHECK(oracles::gradcheck(loss_fn, x) < 1e-4);
  CHECK(oracles::gradcheck(loss_fn, w) < 1e-4);
  CHECK(oracles::gradcheck(loss_fn, b) < 1e-4);

  auto valid_fn = [&] {
    return ops::sum(ops::conv2d(x, w, b, ops::Padding::kValid));
  };
  CHECK(oracles::gradcheck(valid_fn, x) < 1e-4);
  CHECK(oracles::gradcheck(valid_fn, w) < 1e-4);
}

TEST_CASE("batchnorm2d standardizes in train mode") {
  auto rng = test_rng(7);
  const std::int64_t n = 4, c = 3, h = 5;
  auto x = oracles::random_tensor({n, c, h, h}, rng, 3.0);
  // offset channels so raw means are far from zero
  for (std::int64_t i = 0; i < x.size(); ++i) x.mutable_data()[i] += 7.0;
  auto gamma = Tensor<double>::full({c}, 1.0);
  auto beta = Tensor<double>::zeros({c});
  std::vector<double> rm(c, 0.0), rv(c, 1.0);
  auto y = ops::batchnorm2d(x, gamma, beta, rm, rv, /*train=*/true);
  const std::int64_t plane = h * h, m = n * plane;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double s = 0, s2 = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t p = 0; p < plane; ++p) {
        const double v = y[(i * c + ch) * plane + p];
        s += v;
        s2 += v * v;
      }
    }
    const double mean = s / m, var = s2 / m - mean * mean;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }

  SUBCASE("affine with gamma=2, beta=3") {
    auto g2 = Tensor<double>::full({c}, 2.0);
    auto b3 = Tensor<double>::full({c}, 3.0);
    std::vector<double> rm2(c, 0.0), rv2(c, 1.0);
    auto y2 = ops::batchnorm2d(x, g2, b3, rm2, rv2, true);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0, s2 = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t p = 0; p < plane; ++p) {
          const double v = y2[(i * c + ch) * plane + p];
          s += v;
          s2 += v * v;
        }
      }
      const double mean = s / m;
      const double sd = std::sqrt(s2 / m - mean * mean);
      CHECK(mean == doctest::Approx(3.0).epsilon(1e-6));
      CHECK(sd == doctest::Approx(2.0).epsilon(1e-3));
    }
  }

  SUBCASE("zero-variance channel is absorbed by eps") {
    auto flat = Tensor<double>::full({2, 1, 3, 3}, 5.0);
    auto g = Tensor<double>::full({1}, 1.0);
    auto b0 = Tensor<double>::zeros({1});
    std::vector<double> m0(1, 0.0), v0(1, 1.0);
    auto yz = ops::batchnorm2d(flat, g, b0, m0, v0, true);
    for (std::int64_t i = 0; i < yz.size(); ++i) {
      CHECK(yz[i] == doctest::Approx(0.0));
      CHECK(std::isfinite(yz[i]));
    }
  }
}

TEST_CASE("batchnorm2d eval mode uses running stats") {
  auto rng = test_rng(8);
  auto x = oracles::random_tensor({2, 2, 3, 3}, rng);
  auto gamma = Tensor<double>::full({2}, 1.0);
  auto beta = Tensor<double>::zeros({2});
  std::vector<double> rm = {0.5, -0.25}, rv = {4.0, 0.25};
  auto y = ops::batchnorm2d(x, gamma, beta, rm, rv, /*train=*/false);
  const double eps = 1e-5;
  for (std::int64_t i = 0; i < 9; ++i) {
    CHECK(y[i] ==
          doctest::Approx((x[i] - 0.5) / std::sqrt(4.0 + eps)).epsilon(1e-9));
  }
  // eval must not touch the running buffers
  CHECK(rm[0] == 0.5);
  CHECK(rv[1] == 0.25);
}

TEST_CASE("batchnorm2d gradients match finite differences") {
  auto rng = test_rng(9);
  auto x = oracles::random_tensor({3, 2, 4, 4}, rng);
  auto gamma = oracles::random_tensor({2}, rng);
  auto beta = oracles::random_tensor({2}, rng);
  for (std::int64_t i = 0; i < 2; ++i) gamma.mutable_data()[i] += 1.5;
  auto mix = oracles::random_tensor({3, 2, 4, 4}, rng);
  auto loss_fn = [&] {
    std::vector<double> rm(2, 0.0), rv(2, 1.0);  // fresh stats per eval
    return ops::sum(ops::mul(
        ops::batchnorm2d(x, gamma, beta, rm, rv, true), mix));
  };
  CHECK(oracles::gradcheck(loss_fn, x) < 1e-4);
  CHECK(oracles::gradcheck(loss_fn, gamma) < 1e-4);
  CHECK(oracles::gradcheck(loss_fn, beta) < 1e-4);
}

TEST_CASE("every primitive passes the finite-difference check") {
  auto rng = test_rng(10);
  auto x = oracles::random_tensor({2, 3, 4, 4}, rng);
  auto mix = oracles::random_tensor({2, 3, 4, 4}, rng);
  auto mixp = oracles::random_tensor({2, 3, 2, 2}, rng);

  auto check_unary = [&](auto op, const char* name) {
    auto fn = [&] { return ops::sum(ops::mul(op(x), mix)); };
    INFO(name);
    CHECK(oracles::gradcheck(fn, x) < 1e-4);
  };
  check_unary([](const Tensor<double>& t) { return ops::tanh(t); }, "tanh");
  check_unary([](const Tensor<double>& t) { return ops::sigmoid(t); },
              "sigmoid");
  check_unary([](const Tensor<double>& t) { return ops::relu(t); }, "relu");
  check_unary([](const Tensor<double>& t) { return ops::tensor_shift(t, 3); },
              "tensor_shift");

  {
    auto fn = [&] { return ops::sum(ops::mul(ops::avgpool2d(x), mixp)); };
    CHECK(oracles::gradcheck(fn, x) < 1e-4);
  }
  {
    auto y = oracles::random_tensor({2, 3, 4, 4}, rng);
    auto fn = [&] { return ops::sum(ops::mul(ops::mul(x, y), mix)); };
    CHECK(oracles::gradcheck(fn, x) < 1e-4);
    CHECK(oracles::gradcheck(fn, y) < 1e-4);
    auto fa = [&] { return ops::sum(ops::mul(ops::add(x, y), mix)); };
    CHECK(oracles::gradcheck(fa, x) < 1e-4);
    auto fs = [&] { return ops::sum(ops::mul(ops::sub(x, y), mix)); };
    CHECK(oracles::gradcheck(fs, y) < 1e-4);
  }
  {
    auto a = oracles::random_tensor({3, 5}, rng);
    auto w = oracles::random_tensor({5, 4}, rng);
    auto b = oracles::random_tensor({4}, rng);
    auto mixd = oracles::random_tensor({3, 4}, rng);
    auto fn = [&] { return ops::sum(ops::mul(ops::dense(a, w, b), mixd)); };
    CHECK(oracles::gradcheck(fn, a) < 1e-4);
    CHECK(oracles::gradcheck(fn, w) < 1e-4);
    CHECK(oracles::gradcheck(fn, b) < 1e-4);
    auto fm = [&] {
      return ops::sum(ops::mul(ops::matmul(a, w),
                               Tensor<double>::full({3, 4}, 1.0)));
    };
    CHECK(oracles::gradcheck(fm, a) < 1e-4);
    CHECK(oracles::gradcheck(fm, w) < 1e-4);
  }
  {
    auto s = oracles::random_tensor({2, 7}, rng);
    auto mixs = oracles::random_tensor({2, 7}, rng);
    auto fn = [&] {
      return ops::sum(ops::mul(ops::softmax_lastdim(s), mixs));
    };
    CHECK(oracles::gradcheck(fn, s) < 1e-4);
  }
  {
    auto s = oracles::random_tensor({3, 6}, rng);
    auto g = oracles::random_tensor({6}, rng);
    auto b = oracles::random_tensor({6}, rng);
    auto mixl = oracles::random_tensor({3, 6}, rng);
    auto fn = [&] {
      return ops::sum(ops::mul(ops::layernorm_lastdim(s, g, b), mixl));
    };
    CHECK(oracles::gradcheck(fn, s) < 1e-4);
    CHECK(oracles::gradcheck(fn, g) < 1e-4);
    CHECK(oracles::gradcheck(fn, b) < 1e-4);
  }
  {
    auto a = oracles::random_tensor({2, 3, 4}, rng);
    auto b = oracles::random_tensor({2, 4, 5}, rng);
    auto mixb = oracles::random_tensor({2, 3, 5}, rng);
    auto fn = [&] { return ops::sum(ops::mul(ops::bmm_nn(a, b), mixb)); };
    CHECK(oracles::gradcheck(fn, a) < 1e-4);
    CHECK(oracles::gradcheck(fn, b) < 1e-4);
    auto c = oracles::random_tensor({2, 5, 4}, rng);
    auto fn2 = [&] { return ops::sum(ops::mul(ops::bmm_nt(a, c), mixb)); };
    CHECK(oracles::gradcheck(fn2, a) < 1e-4);
    CHECK(oracles::gradcheck(fn2, c) < 1e-4);
  }
  {
    auto fn = [&] {
      return ops::sum(ops::mul(ops::mean_axis1(x, 2, 3, 16),
                               Tensor<double>::full({2, 16}, 0.7)));
    };
    CHECK(oracles::gradcheck(fn, x) < 1e-4);
  }
}

TEST_CASE("dropout: deterministic per stream, correct backward scaling") {
  auto rng = test_rng(11);
  auto x = oracles::random_tensor({200}, rng);
  RngStream s1(42), s2(42);
  auto a = ops::dropout(x, 0.5, s1, true);
  auto b = ops::dropout(x, 0.5, s2, true);
  for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  // eval mode is identity
  RngStream s3(42);
  auto c = ops::dropout(x, 0.5, s3, false);
  for (std::int64_t i = 0; i < c.size(); ++i) CHECK(c[i] == x[i]);

  // kept entries scale by 1/(1-p)
  std::int64_t kept = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    if (a[i] != 0.0) {
      CHECK(a[i] == doctest::Approx(x[i] * 2.0));
      ++kept;
    }
  }
  CHECK(kept > 50);
  CHECK(kept < 150);
}

TEST_CASE("forward determinism given identical inputs") {
  auto rng = test_rng(12);
  auto x = oracles::random_tensor({2, 3, 6, 6}, rng);
  auto w = oracles::random_tensor({4, 3, 3, 3}, rng);
  auto b = oracles::random_tensor({4}, rng);
  auto y1 = ops::conv2d(x, w, b);
  auto y2 = ops::conv2d(x, w, b);
  for (std::int64_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);
}
