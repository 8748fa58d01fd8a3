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
#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "pulseforge/model_transformer.hpp"

using namespace pulseforge;

namespace {

TransformerConfig small_t2() {
  TransformerConfig cfg = TransformerConfig::t2();
  cfg.input_size = 12;
  cfg.frames_per_window = 5;
  cfg.embed_dim = 12;
  cfg.heads = {3, 6};
  return cfg;  // 12/4 = 3x3 token grid, window 3
}

}  // namespace

TEST_CASE("patch_embed: grid arithmetic and zero input") {
  TransformerConfig cfg = TransformerConfig::t2();
  EfficientPhysT<float> model(cfg, 1);
  // 36x36, patch 4 -> 9x9 tokens
  auto frames = Tensor<float>::zeros({2, 3, 36, 36});
  auto tokens = model.patch_embed(frames);
  CHECK(tokens.shape() == Shape{2 * 81, cfg.embed_dim});

  // zero frames: every token is the layer-normalized projection bias, so all
  // token rows are identical
  for (std::int64_t r = 1; r < tokens.dim(0); ++r) {
    for (std::int64_t d = 0; d < cfg.embed_dim; ++d) {
      CHECK(tokens[r * cfg.embed_dim + d] == tokens[d]);
    }
  }
}

TEST_CASE("patch_embed gradient check") {
  TransformerConfig cfg = small_t2();
  EfficientPhysT<double> model(cfg, 2);
  auto rng = oracles::RngStream(3);
  auto frames = oracles::random_tensor({2, 3, 12, 12}, rng);
  auto mix = oracles::random_tensor({2 * 9, 12}, rng);
  auto fn = [&] { return ops::sum(ops::mul(model.patch_embed(frames), mix)); };
  CHECK(oracles::gradcheck(fn, frames) < 1e-4);
}

TEST_CASE("token_shift matches tensor_shift semantics") {
  // T=2 grid of one token, D=3: same worked example as the conv-side shift
  auto x = Tensor<float>::from_data({2, 1, 3}, {1, 2, 3, 4, 5, 6});
  auto y = ops::token_shift(x, 2, 1, 3, 3);
  CHECK(y[0] == 4.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 3.0f);
  CHECK(y[3] == 0.0f);
  CHECK(y[4] == 2.0f);
  CHECK(y[5] == 6.0f);

  auto zeros = ops::token_shift(Tensor<float>::zeros({3, 4, 6}), 3, 4, 6, 3);
  for (std::int64_t i = 0; i < zeros.size(); ++i) CHECK(zeros[i] == 0.0f);

  CHECK_THROWS_AS(ops::token_shift(Tensor<float>::zeros({2, 2, 2}), 2, 2, 2, 3),
                  InvalidArgument);

  auto rng = oracles::RngStream(4);
  auto xr = oracles::random_tensor({4, 5, 9}, rng);
  auto mix = oracles::random_tensor({4, 5, 9}, rng);
  auto fn = [&] {
    return ops::sum(ops::mul(ops::token_shift(xr, 4, 5, 9, 3), mix));
  };
  CHECK(oracles::gradcheck(fn, xr) < 1e-4);
}

TEST_CASE("window partition and reverse compose to the identity") {
  for (auto [gh, gw, win, shifted] :
       {std::tuple{9LL, 9LL, 3LL, false}, {9LL, 9LL, 3LL, true},
        {5LL, 5LL, 3LL, false}, {5LL, 5LL, 3LL, true},
        {6LL, 4LL, 2LL, true}}) {
    const std::int64_t frames = 2, dim = 4;
    WindowPlan plan = build_window_plan(gh, gw, win, shifted, frames);
    auto rng = oracles::RngStream(5);
    auto tokens = oracles::random_tensor({frames * gh * gw, dim}, rng);
    auto parts = ops::gather_rows(
        tokens, {frames * plan.n_windows * win * win, dim}, plan.partition,
        dim);
    auto back =
        ops::gather_rows(parts, {frames * gh * gw, dim}, plan.reverse, dim);
    for (std::int64_t i = 0; i < tokens.size(); ++i) {
      CHECK(back[i] == tokens[i]);
    }
  }
}

TEST_CASE("uniform attention when query-key products vanish") {
  // one window covering the whole 3x3 grid, one head, value projection and
  // output projection identity, q,k weights zero -> softmax is uniform and
  // the attention output is the mean token
  TransformerConfig cfg = small_t2();
  cfg.heads = {1, 1};
  EfficientPhysT<double> model(cfg, 7);
  auto& blk = model.block(0, 0);
  const std::int64_t dim = cfg.embed_dim;
  // qkv weight [dim, 3*dim]: q,k parts zero, v part identity
  {
    auto w = Tensor<double>::zeros({dim, 3 * dim});
    for (std::int64_t i = 0; i < dim; ++i) {
      w.mutable_data()[i * 3 * dim + 2 * dim + i] = 1.0;
    }
    blk.qkv_w.tensor = w.set_requires_grad(true);
    blk.qkv_b.tensor = Tensor<double>::zeros({3 * dim}).set_requires_grad(true);
    auto proj = Tensor<double>::zeros({dim, dim});
    for (std::int64_t i = 0; i < dim; ++i) {
      proj.mutable_data()[i * dim + i] = 1.0;
    }
    blk.proj_w.tensor = proj.set_requires_grad(true);
    blk.proj_b.tensor = Tensor<double>::zeros({dim}).set_requires_grad(true);
  }
  const std::int64_t frames = 1, g = 9;
  WindowPlan plan = build_window_plan(3, 3, 3, false, frames);
  auto rng = oracles::RngStream(8);
  auto tokens = oracles::random_tensor({frames * g, dim}, rng);
  auto out = model.window_attention(tokens, blk, plan, frames);
  // mean token
  std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
  for (std::int64_t r = 0; r < g; ++r) {
    for (std::int64_t d = 0; d < dim; ++d) {
      mean[static_cast<std::size_t>(d)] += tokens[r * dim + d] / 9.0;
    }
  }
  for (std::int64_t r = 0; r < g; ++r) {
    for (std::int64_t d = 0; d < dim; ++d) {
      CHECK(within(out[r * dim + d], mean[static_cast<std::size_t>(d)],
                   1e-12));
    }
  }
}

TEST_CASE("attention weights sum to one per query, including masked") {
  // verified indirectly: constant value vectors must pass through unchanged
  // under any mask because sum_j a_ij v_j = v when v is constant and
  // sum_j a_ij = 1
  TransformerConfig cfg = small_t2();
  cfg.heads = {1, 1};
  EfficientPhysT<double> model(cfg, 9);
  auto& blk = model.block(0, 0);
  const std::int64_t dim = cfg.embed_dim;
  auto w = Tensor<double>::zeros({dim, 3 * dim});
  auto rng = oracles::RngStream(10);
  // random q,k weights, v identity
  for (std::int64_t i = 0; i < dim; ++i) {
    for (std::int64_t j = 0; j < 2 * dim; ++j) {
      w.mutable_data()[i * 3 * dim + j] = rng.uniform(-0.5, 0.5);
    }
    w.mutable_data()[i * 3 * dim + 2 * dim + i] = 1.0;
  }
  blk.qkv_w.tensor = w.set_requires_grad(true);
  auto proj = Tensor<double>::zeros({dim, dim});
  for (std::int64_t i = 0; i < dim; ++i) proj.mutable_data()[i * dim + i] = 1.0;
  blk.proj_w.tensor = proj.set_requires_grad(true);

  const std::int64_t frames = 2, g = 9;
  // shifted plan: wrap masking active on the 3x3 grid
  WindowPlan plan = build_window_plan(3, 3, 3, true, frames);
  Tensor<double> tokens = Tensor<double>::zeros({frames * g, dim});
  for (std::int64_t r = 0; r < frames * g; ++r) {
    for (std::int64_t d = 0; d < dim; ++d) {
      tokens.mutable_data()[r * dim + d] = 0.37;  // constant across tokens
    }
  }
  auto out = model.window_attention(tokens, blk, plan, frames);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    CHECK(within(out[i], 0.37, 1e-9));
  }
}

TEST_CASE("window_block gradient check") {
  TransformerConfig cfg = small_t2();
  EfficientPhysT<double> model(cfg, 11);
  auto& blk = model.block(0, 1);
  const std::int64_t frames = 2, g = 9, dim = cfg.embed_dim;
  WindowPlan plan = build_window_plan(3, 3, 3, true, frames);
  auto rng = oracles::RngStream(12);
  auto tokens = oracles::random_tensor({frames * g, dim}, rng);
  auto mix = oracles::random_tensor({frames * g, dim}, rng);
  auto fn = [&] {
    return ops::sum(ops::mul(model.window_block(tokens, blk, plan, frames),
                             mix));
  };
  CHECK(oracles::gradcheck(fn, tokens) < 1e-3);
  CHECK(oracles::gradcheck(fn, blk.qkv_w.tensor) < 1e-3);
  CHECK(oracles::gradcheck(fn, blk.fc1_w.tensor) < 1e-3);
  CHECK(oracles::gradcheck(fn, blk.norm1_g.tensor) < 1e-3);
}

TEST_CASE("forward_t: shapes, constant video symmetry, determinism") {
  TransformerConfig cfg = small_t2();
  EfficientPhysT<float> model(cfg, 13);
  auto clip = Tensor<float>::full({5, 3, 12, 12}, 0.31f);
  auto trace = model.forward(clip, false);
  REQUIRE(trace.shape() == Shape{4});
  // interior frames identical (TSM boundary frames excluded): 3 blocks of
  // token shift corrupt up to 3 frames per end; with only 4 frames just
  // check the forward is finite and repeatable
  for (std::int64_t i = 0; i < trace.size(); ++i) {
    CHECK(std::isfinite(trace[i]));
  }
  auto again = model.forward(clip, false);
  for (std::int64_t i = 0; i < trace.size(); ++i) {
    CHECK(trace[i] == again[i]);
  }

  SUBCASE("longer constant clip has identical interior entries") {
    TransformerConfig cfg2 = small_t2();
    cfg2.frames_per_window = 12;
    EfficientPhysT<float> m2(cfg2, 13);
    auto clip2 = Tensor<float>::full({12, 3, 12, 12}, 0.31f);
    auto tr = m2.forward(clip2, false);
    REQUIRE(tr.size() == 11);
    // 3 blocks -> up to 3 corrupted frames at each temporal boundary
    for (std::int64_t i = 3; i + 3 < 11; ++i) {
      CHECK(within(tr[i], tr[3], 1e-6));
    }
  }

  CHECK_THROWS_AS(model.forward(Tensor<float>::zeros({5, 3, 16, 16}), false),
                  InvalidArgument);
}

TEST_CASE("T2 has exactly 3 blocks and 3 TSM insertions") {
  TransformerConfig cfg = TransformerConfig::t2();
  CHECK(cfg.depths == std::vector<int>{2, 1});
  CHECK(cfg.block_count() == 3);
  CHECK(cfg.tsm_count() == 3);
  cfg.use_tsm = false;
  CHECK(cfg.tsm_count() == 0);

  CHECK(TransformerConfig::t1().block_count() == 12);
}

TEST_CASE("parameter count invariant to TSM insertion/removal") {
  TransformerConfig cfg = small_t2();
  EfficientPhysT<float> a(cfg, 5);
  cfg.use_tsm = false;
  EfficientPhysT<float> b(cfg, 5);
  CHECK(a.param_count() == b.param_count());
  CHECK(a.param_count() > 0);
}

TEST_CASE("T2 MACs are below T1 MACs") {
  auto t1 = TransformerConfig::t1();
  auto t2 = TransformerConfig::t2();
  CHECK(EfficientPhysT<float>::flop_count(t2) <
        EfficientPhysT<float>::flop_count(t1));
}

TEST_CASE("transformer weights round trip") {
  TransformerConfig cfg = small_t2();
  EfficientPhysT<float> model(cfg, 21);
  auto rng = oracles::RngStream(22);
  auto clip = Tensor<float>::zeros({5, 3, 12, 12});
  for (std::int64_t i = 0; i < clip.size(); ++i) {
    clip.mutable_data()[i] = static_cast<float>(rng.uniform());
  }
  auto before = model.forward(clip, false);
  const std::string path = (std::filesystem::temp_directory_path() /
                            "pf_t_weights_test.bin")
                               .string();
  model.save().save(path);
  auto loaded = EfficientPhysT<float>::load(ModelWeights::load(path));
  auto after = loaded.forward(clip, false);
  REQUIRE(after.size() == before.size());
  for (std::int64_t i = 0; i < after.size(); ++i) {
    CHECK(within(after[i], before[i], 1e-6 + 1e-5 * std::abs(before[i])));
  }
  // unique parameter names
  std::set<std::string> names;
  for (auto* p : model.parameters()) {
    CHECK(names.insert(p->name).second);
  }
  std::filesystem::remove(path);
}
