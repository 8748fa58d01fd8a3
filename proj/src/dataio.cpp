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

#include "pulseforge/dataio.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace pulseforge {

namespace {

void write_file(const fs::path& path, const void* data, std::size_t bytes) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "cannot write " + path.string());
  f.write(static_cast<const char*>(data),
          static_cast<std::streamsize>(bytes));
  f.flush();
  require(f.good(), "failed writing " + path.string());
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f.good()) throw CorruptFileError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(f.tellg());
  std::vector<char> buf(size);
  f.seekg(0);
  f.read(buf.data(), static_cast<std::streamsize>(size));
  if (!f.good()) throw CorruptFileError("failed reading " + path.string());
  return buf;
}

}  // namespace

void store_clip(const LabeledClip& labeled, const std::string& dir) {
  const auto& c = labeled.clip;
  require(c.frames >= 1 && c.fps > 0, "store_clip: empty or rate-less clip");
  require(static_cast<std::int64_t>(c.data.size()) ==
              c.frames * c.frame_bytes(),
          "store_clip: frame buffer does not match header");
  fs::create_directories(dir);
  nlohmann::json meta = {{"fps", c.fps},
                         {"width", c.width},
                         {"height", c.height},
                         {"frames", c.frames},
                         {"clip_id", c.clip_id}};
  const bool labeled_clip = !labeled.bvp.samples.empty();
  if (labeled_clip) {
    require(static_cast<std::int64_t>(labeled.bvp.samples.size()) == c.frames,
            "store_clip: bvp length must equal frame count");
    meta["hr_gt"] = labeled.hr_gt;
  }
  if (labeled.saturation_warning) meta["saturation_warning"] = true;
  const std::string meta_str = meta.dump(2) + "\n";
  write_file(fs::path(dir) / "meta.json", meta_str.data(), meta_str.size());
  write_file(fs::path(dir) / "frames.bin", c.data.data(), c.data.size());
  if (labeled_clip) {
    std::vector<float> bvp32(labeled.bvp.samples.begin(),
                             labeled.bvp.samples.end());
    write_file(fs::path(dir) / "bvp.bin", bvp32.data(),
               bvp32.size() * sizeof(float));
  }
}

LabeledClip load_clip(const std::string& dir) {
  const fs::path base(dir);
  const auto meta_buf = read_file(base / "meta.json");
  nlohmann::json meta = nlohmann::json::parse(
      meta_buf.begin(), meta_buf.end(), nullptr, false);
  if (meta.is_discarded()) {
    throw CorruptFileError("meta.json is not valid JSON in " + dir);
  }
  LabeledClip out;
  VideoClip& c = out.clip;
  try {
    c.fps = meta.at("fps").get<double>();
    c.width = meta.at("width").get<std::int64_t>();
    c.height = meta.at("height").get<std::int64_t>();
    c.frames = meta.at("frames").get<std::int64_t>();
    c.clip_id = meta.at("clip_id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("meta.json missing required field in " + dir +
                           ": " + e.what());
  }
  if (c.frames < 1 || c.height < 1 || c.width < 1 || c.fps <= 0) {
    throw CorruptFileError("meta.json carries degenerate dimensions in " +
                           dir);
  }
  out.saturation_warning = meta.value("saturation_warning", false);

  const auto frames_buf = read_file(base / "frames.bin");
  const auto expected = static_cast<std::size_t>(c.frames * c.frame_bytes());
  if (frames_buf.size() != expected) {
    throw CorruptFileError("frames.bin length mismatch in " + dir +
                           ": expected " + std::to_string(expected) +
                           " bytes, found " +
                           std::to_string(frames_buf.size()));
  }
  c.data.assign(frames_buf.begin(), frames_buf.end());

  if (meta.contains("hr_gt")) {
    out.hr_gt = meta["hr_gt"].get<double>();
    if (!fs::exists(base / "bvp.bin")) {
      throw CorruptFileError("labels declared but bvp.bin missing in " + dir);
    }
    const auto bvp_buf = read_file(base / "bvp.bin");
    if (bvp_buf.size() != static_cast<std::size_t>(c.frames) * sizeof(float)) {
      throw CorruptFileError("bvp.bin length mismatch in " + dir);
    }
    const float* p = reinterpret_cast<const float*>(bvp_buf.data());
    out.bvp.samples.assign(p, p + c.frames);
    out.bvp.fps = c.fps;
    out.bvp.kind = PulseTrace::Kind::kRaw;
  }
  return out;
}

void save_manifest(const ClipManifest& manifest, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : manifest) {
    nlohmann::json row = {{"dir", e.dir}, {"split", e.split}};
    if (e.hr_gt) row["hr_gt"] = *e.hr_gt;
    j.push_back(std::move(row));
  }
  const std::string s = j.dump(2) + "\n";
  write_file(path, s.data(), s.size());
}

ClipManifest load_manifest(const std::string& path) {
  const auto buf = read_file(path);
  nlohmann::json j = nlohmann::json::parse(buf.begin(), buf.end(), nullptr,
                                           false);
  if (j.is_discarded() || !j.is_array()) {
    throw CorruptFileError("manifest is not a JSON list: " + path);
  }
  ClipManifest out;
  for (const auto& row : j) {
    ManifestEntry e;
    e.dir = row.at("dir").get<std::string>();
    e.split = row.at("split").get<std::string>();
    if (row.contains("hr_gt")) e.hr_gt = row["hr_gt"].get<double>();
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<LabeledClip> load_split(const ClipManifest& manifest,
                                    const std::string& manifest_dir,
                                    const std::string& split) {
  std::vector<LabeledClip> out;
  for (const auto& e : manifest) {
    if (e.split != split) continue;
    const fs::path dir = fs::path(manifest_dir) / e.dir;
    require(fs::exists(dir), "manifest references missing clip: " +
                                 dir.string());
    out.push_back(load_clip(dir.string()));
  }
  return out;
}

void resize_area_chw(const std::uint8_t* src, std::int64_t src_h,
                     std::int64_t src_w, float* dst, std::int64_t dst_h,
                     std::int64_t dst_w) {
  constexpr float kInv255 = 1.0f / 255.0f;
  if (src_h == dst_h && src_w == dst_w) {
    const std::int64_t plane = dst_h * dst_w;
    for (std::int64_t p = 0; p < plane; ++p) {
      for (std::int64_t ch = 0; ch < 3; ++ch) {
        dst[ch * plane + p] = static_cast<float>(src[p * 3 + ch]) * kInv255;
      }
    }
    return;
  }
  const double sy = static_cast<double>(src_h) / static_cast<double>(dst_h);
  const double sx = static_cast<double>(src_w) / static_cast<double>(dst_w);
  const std::int64_t plane = dst_h * dst_w;
  for (std::int64_t oy = 0; oy < dst_h; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    for (std::int64_t ox = 0; ox < dst_w; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      double acc[3] = {0, 0, 0};
      double area = 0.0;
      for (std::int64_t iy = static_cast<std::int64_t>(y0);
           iy < static_cast<std::int64_t>(std::ceil(y1)); ++iy) {
        const double wy = std::min(y1, static_cast<double>(iy + 1)) -
                          std::max(y0, static_cast<double>(iy));
        if (wy <= 0) continue;
        for (std::int64_t ix = static_cast<std::int64_t>(x0);
             ix < static_cast<std::int64_t>(std::ceil(x1)); ++ix) {
          const double wx = std::min(x1, static_cast<double>(ix + 1)) -
                            std::max(x0, static_cast<double>(ix));
          if (wx <= 0) continue;
          const double w = wy * wx;
          const std::uint8_t* px =
              src + (std::min(iy, src_h - 1) * src_w + std::min(ix, src_w - 1)) *
                        3;
          for (int ch = 0; ch < 3; ++ch) acc[ch] += w * px[ch];
          area += w;
        }
      }
      for (int ch = 0; ch < 3; ++ch) {
        dst[ch * plane + oy * dst_w + ox] =
            static_cast<float>(acc[ch] / area) * kInv255;
      }
    }
  }
}

std::vector<float> label_preprocess(const std::vector<double>& bvp_window) {
  require(bvp_window.size() >= 2, "label_preprocess: window needs >= 2");
  std::vector<double> diff(bvp_window.size() - 1);
  for (std::size_t i = 0; i + 1 < bvp_window.size(); ++i) {
    diff[i] = bvp_window[i + 1] - bvp_window[i];
  }
  double mean = 0.0;
  for (double d : diff) mean += d;
  mean /= static_cast<double>(diff.size());
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean);
  const double sd = std::sqrt(var / static_cast<double>(diff.size()));
  std::vector<float> out(diff.size());
  for (std::size_t i = 0; i < diff.size(); ++i) {
    out[i] = static_cast<float>((diff[i] - mean) / (sd + 1e-8));
  }
  return out;
}

}  // namespace pulseforge
