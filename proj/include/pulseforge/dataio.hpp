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

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pulseforge/common.hpp"
#include "pulseforge/signal.hpp"
#include "pulseforge/tensor.hpp"

namespace pulseforge {

/// Raw 8-bit RGB frame sequence, interleaved row-major, frame-major.
struct VideoClip {
  std::int64_t frames = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> data;  // frames*height*width*3
  double fps = 0.0;
  std::string clip_id;

  std::int64_t frame_bytes() const { return height * width * 3; }
  const std::uint8_t* frame(std::int64_t n) const {
    return data.data() + n * frame_bytes();
  }
};

/// Clip plus its ground-truth blood volume pulse.
struct LabeledClip {
  VideoClip clip;
  PulseTrace bvp;          // one sample per frame; may be empty if unlabeled
  double hr_gt = 0.0;      // spectral argmax of bvp, BPM
  bool saturation_warning = false;
};

/// Directory layout: meta.json + frames.bin + bvp.bin (when labeled).
void store_clip(const LabeledClip& clip, const std::string& dir);
LabeledClip load_clip(const std::string& dir);

struct ManifestEntry {
  std::string dir;  // relative to the manifest file
  std::optional<double> hr_gt;
  std::string split;  // train | val | test
};
using ClipManifest = std::vector<ManifestEntry>;

void save_manifest(const ClipManifest& manifest, const std::string& path);
ClipManifest load_manifest(const std::string& path);
std::vector<LabeledClip> load_split(const ClipManifest& manifest,
                                    const std::string& manifest_dir,
                                    const std::string& split);

/// Exact area-average resample of one RGB frame into float [0,1]
/// channel-first planes. A constant image stays constant.
void resize_area_chw(const std::uint8_t* src, std::int64_t src_h,
                     std::int64_t src_w, float* dst, std::int64_t dst_h,
                     std::int64_t dst_w);

/// First difference of a label window, standardized to zero mean and unit
/// variance (sigma guarded by 1e-8).
std::vector<float> label_preprocess(const std::vector<double>& bvp_window);

/// Deterministic window slicing: floor((len-N)/stride)+1 windows, frames
/// area-resized to out_size x out_size, float [0,1], channel-first.
template <typename S>
class WindowSet {
 public:
  WindowSet(const LabeledClip* clip, std::int64_t window, std::int64_t stride,
            std::int64_t out_size)
      : clip_(clip), window_(window), stride_(stride), out_size_(out_size) {
    require(window >= 2, "make_windows: window must hold at least 2 frames");
    require(stride >= 1, "make_windows: stride must be positive");
    count_ = clip->clip.frames >= window
                 ? (clip->clip.frames - window) / stride + 1
                 : 0;
  }

  std::int64_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::int64_t start_frame(std::int64_t k) const { return k * stride_; }

  /// Frames [k*stride, k*stride+window) as a [N,3,H,W] tensor.
  Tensor<S> frames(std::int64_t k) const {
    require(k >= 0 && k < count_, "make_windows: window index out of range");
    const auto& c = clip_->clip;
    Tensor<S> out = Tensor<S>::zeros({window_, 3, out_size_, out_size_});
    std::vector<float> plane(
        static_cast<std::size_t>(3 * out_size_ * out_size_));
    for (std::int64_t f = 0; f < window_; ++f) {
      resize_area_chw(c.frame(start_frame(k) + f), c.height, c.width,
                      plane.data(), out_size_, out_size_);
      S* dst = out.mutable_data() + f * 3 * out_size_ * out_size_;
      for (std::size_t i = 0; i < plane.size(); ++i) {
        dst[i] = static_cast<S>(plane[i]);
      }
    }
    return out;
  }

  /// Raw bvp samples aligned with the same frame indices.
  std::vector<double> labels(std::int64_t k) const {
    require(k >= 0 && k < count_, "make_windows: window index out of range");
    require(static_cast<std::int64_t>(clip_->bvp.samples.size()) >=
                start_frame(k) + window_,
            "make_windows: clip has no labels for this window");
    const auto begin =
        clip_->bvp.samples.begin() + static_cast<std::ptrdiff_t>(start_frame(k));
    return {begin, begin + static_cast<std::ptrdiff_t>(window_)};
  }

 private:
  const LabeledClip* clip_;
  std::int64_t window_, stride_, out_size_, count_ = 0;
};

template <typename S>
WindowSet<S> make_windows(const LabeledClip& clip, std::int64_t window,
                          std::int64_t stride, std::int64_t out_size) {
  return WindowSet<S>(&clip, window, stride, out_size);
}

}  // namespace pulseforge
