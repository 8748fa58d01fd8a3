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

#include <filesystem>
#include <fstream>

#include "pulseforge/dataio.hpp"
#include "pulseforge/rng.hpp"
#include "pulseforge/synth.hpp"
#include "pulseforge/weights.hpp"

using namespace pulseforge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("pf_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

LabeledClip small_clip(std::uint64_t seed = 1) {
  SynthParams p;
  p.duration_s = 4.0;
  p.noise_std = 1.5;
  p.seed = seed;
  p.clip_id = "clip_" + std::to_string(seed);
  return gen_clip(p);
}

}  // namespace

TEST_CASE("store/load round trip is bitwise exact") {
  TempDir tmp;
  auto clip = small_clip();
  const std::string dir = (tmp.path / "c0").string();
  store_clip(clip, dir);
  auto back = load_clip(dir);
  CHECK(back.clip.data == clip.clip.data);
  CHECK(back.clip.fps == clip.clip.fps);
  CHECK(back.clip.clip_id == clip.clip.clip_id);
  CHECK(back.hr_gt == clip.hr_gt);
  REQUIRE(back.bvp.samples.size() == clip.bvp.samples.size());
  for (std::size_t i = 0; i < back.bvp.samples.size(); ++i) {
    // labels persist as f32; loading recovers those exact values
    CHECK(back.bvp.samples[i] ==
          static_cast<double>(static_cast<float>(clip.bvp.samples[i])));
  }

  SUBCASE("second store emits identical bytes") {
    const std::string dir2 = (tmp.path / "c1").string();
    store_clip(back, dir2);
    auto a = std::ifstream(fs::path(dir) / "frames.bin", std::ios::binary);
    auto b = std::ifstream(fs::path(dir2) / "frames.bin", std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(a)), {});
    std::vector<char> bb((std::istreambuf_iterator<char>(b)), {});
    CHECK(ba == bb);
  }
}

TEST_CASE("corrupt clip directories are rejected") {
  TempDir tmp;
  auto clip = small_clip();
  const std::string dir = (tmp.path / "c").string();
  store_clip(clip, dir);

  SUBCASE("truncated frames.bin") {
    fs::resize_file(fs::path(dir) / "frames.bin", 100);
    CHECK_THROWS_AS(load_clip(dir), CorruptFileError);
  }
  SUBCASE("missing bvp.bin with labels declared") {
    fs::remove(fs::path(dir) / "bvp.bin");
    CHECK_THROWS_AS(load_clip(dir), CorruptFileError);
  }
  SUBCASE("truncated bvp.bin") {
    fs::resize_file(fs::path(dir) / "bvp.bin", 10);
    CHECK_THROWS_AS(load_clip(dir), CorruptFileError);
  }
  SUBCASE("broken meta.json") {
    std::ofstream(fs::path(dir) / "meta.json") << "{ not json";
    CHECK_THROWS_AS(load_clip(dir), CorruptFileError);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(load_clip((tmp.path / "nope").string()), CorruptFileError);
  }
}

TEST_CASE("manifest round trip and split loading") {
  TempDir tmp;
  ClipManifest m;
  for (int i = 0; i < 4; ++i) {
    auto clip = small_clip(static_cast<std::uint64_t>(i));
    const std::string rel = "clips/c" + std::to_string(i);
    store_clip(clip, (tmp.path / rel).string());
    m.push_back({rel, clip.hr_gt, i < 2 ? "train" : "val"});
  }
  const std::string mpath = (tmp.path / "manifest.json").string();
  save_manifest(m, mpath);
  auto back = load_manifest(mpath);
  REQUIRE(back.size() == 4);
  CHECK(back[0].dir == "clips/c0");
  CHECK(back[2].split == "val");
  CHECK(back[1].hr_gt.has_value());

  auto train = load_split(back, tmp.path.string(), "train");
  CHECK(train.size() == 2);
  auto val = load_split(back, tmp.path.string(), "val");
  CHECK(val.size() == 2);
  CHECK(load_split(back, tmp.path.string(), "test").empty());
}

TEST_CASE("make_windows: counts, indices, values") {
  auto clip = small_clip();  // 120 frames at 30 fps
  REQUIRE(clip.clip.frames == 120);

  auto ws = make_windows<float>(clip, 21, 21, 36);
  CHECK(ws.size() == 5);  // floor((120-21)/21)+1
  CHECK(ws.start_frame(1) == 21);

  auto w0 = ws.frames(0);
  CHECK(w0.shape() == Shape{21, 3, 36, 36});
  // float conversion in [0,1]
  for (std::int64_t i = 0; i < w0.size(); ++i) {
    CHECK(w0[i] >= 0.0f);
    CHECK(w0[i] <= 1.0f);
  }
  // window frame k equals clip frame start+k (identity resize path)
  const std::uint8_t* f22 = clip.clip.frame(22);
  const float* got = w0.data();  // compare window 1 frame 1 instead
  auto w1 = ws.frames(1);
  got = w1.data() + 1 * 3 * 36 * 36;
  for (std::int64_t p = 0; p < 36 * 36; ++p) {
    CHECK(got[p] == doctest::Approx(f22[p * 3 + 0] / 255.0f));
  }

  auto labels = ws.labels(1);
  REQUIRE(labels.size() == 21);
  CHECK(labels[0] == clip.bvp.samples[21]);

  SUBCASE("clip shorter than the window gives an empty set") {
    auto tiny = small_clip();
    tiny.clip.frames = 10;
    tiny.clip.data.resize(
        static_cast<std::size_t>(10 * tiny.clip.frame_bytes()));
    tiny.bvp.samples.resize(10);
    auto empty = make_windows<float>(tiny, 21, 21, 36);
    CHECK(empty.empty());
    CHECK(empty.size() == 0);
  }

  SUBCASE("spec example: len 100, N 21, stride 21 gives 4 windows") {
    auto c100 = small_clip();
    c100.clip.frames = 100;
    c100.clip.data.resize(
        static_cast<std::size_t>(100 * c100.clip.frame_bytes()));
    c100.bvp.samples.resize(100);
    CHECK(make_windows<float>(c100, 21, 21, 36).size() == 4);
  }
}

TEST_CASE("resize: constant image stays constant, means are preserved") {
  std::vector<std::uint8_t> src(static_cast<std::size_t>(24 * 20 * 3), 180);
  std::vector<float> dst(static_cast<std::size_t>(3 * 9 * 9));
  resize_area_chw(src.data(), 24, 20, dst.data(), 9, 9);
  for (float v : dst) CHECK(v == doctest::Approx(180.0f / 255.0f));

  // area resample preserves the global mean exactly
  RngStream rng(3);
  for (auto& v : src) v = static_cast<std::uint8_t>(rng.uniform() * 255);
  resize_area_chw(src.data(), 24, 20, dst.data(), 9, 9);
  double src_mean = 0;
  for (std::size_t i = 0; i < src.size(); i += 3) src_mean += src[i];
  src_mean /= (24.0 * 20.0) * 255.0;
  double dst_mean = 0;
  for (std::size_t i = 0; i < 81; ++i) dst_mean += dst[i];
  dst_mean /= 81.0;
  CHECK(dst_mean == doctest::Approx(src_mean).epsilon(1e-5));
}

TEST_CASE("label_preprocess: worked examples and invariants") {
  {
    auto t = label_preprocess({1.0, 3.0, 6.0});
    REQUIRE(t.size() == 2);
    CHECK(t[0] == doctest::Approx(-1.0));
    CHECK(t[1] == doctest::Approx(1.0));
  }
  {
    auto t = label_preprocess(std::vector<double>(21, 4.2));
    for (float v : t) CHECK(v == 0.0f);
  }
  {
    RngStream rng(9);
    std::vector<double> bvp(21);
    for (auto& v : bvp) v = rng.uniform(-1, 1);
    auto t = label_preprocess(bvp);
    double mean = 0;
    for (float v : t) mean += v;
    mean /= static_cast<double>(t.size());
    double var = 0;
    for (float v : t) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(t.size()));
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(sd - 1.0) < 1e-4);
  }
}

TEST_CASE("weights file round trip and corruption detection") {
  TempDir tmp;
  ModelWeights w;
  auto t1 = Tensor<float>::from_data({2, 3}, {1, 2, 3, 4, 5, 6.5f});
  auto t2 = Tensor<double>::from_data({4}, {0.1, -0.2, 0.3, 12345.6789});
  w.add_tensor("a.weight", t1);
  w.add_tensor("b.bias", t2);
  w.config()["config"] = {{"input_size", 36}};
  const std::string path = (tmp.path / "w.bin").string();
  w.save(path);

  auto back = ModelWeights::load(path);
  auto r1 = back.tensor<float>("a.weight");
  CHECK(r1.shape() == Shape{2, 3});
  for (std::int64_t i = 0; i < 6; ++i) CHECK(r1[i] == t1[i]);
  auto r2 = back.tensor<double>("b.bias");
  for (std::int64_t i = 0; i < 4; ++i) CHECK(r2[i] == t2[i]);
  CHECK(back.config()["config"]["input_size"] == 36);
  CHECK(back.entry("a.weight").dtype == "f32");
  CHECK(back.entry("b.bias").dtype == "f64");

  SUBCASE("byte-identical rewrite") {
    const std::string path2 = (tmp.path / "w2.bin").string();
    back.save(path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(a)), {});
    std::vector<char> bb((std::istreambuf_iterator<char>(b)), {});
    CHECK(ba == bb);
  }
  SUBCASE("payload length mismatch is caught") {
    fs::resize_file(path, fs::file_size(path) - 4);
    CHECK_THROWS_AS(ModelWeights::load(path), CorruptFileError);
  }
  SUBCASE("duplicate names are rejected") {
    CHECK_THROWS_AS(w.add_tensor("a.weight", t1), InvalidArgument);
  }
}
