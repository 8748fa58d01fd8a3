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

#include <ostream>
#include <string>
#include <vector>

#include "pulseforge/dataio.hpp"
#include "pulseforge/model_conv.hpp"
#include "pulseforge/model_transformer.hpp"

namespace pulseforge {

/// Two-branch reference in the TS-CAN mold: a motion branch fed hand-crafted
/// normalized difference frames and an appearance branch fed standardized raw
/// frames that supplies the attention masks. Exists only as the latency/FLOP
/// comparison oracle; inference only.
class TwoBranchReference {
 public:
  struct Inputs {
    Tensor<float> motion;      // [N-1,C,H,W] normalized difference frames
    Tensor<float> appearance;  // [N-1,C,H,W] standardized raw frames
  };

  TwoBranchReference(const ConvModelConfig& cfg, std::uint64_t seed);

  /// The hand-crafted preprocessing this architecture needs outside the
  /// graph; its cost is what the preprocessing latency column measures.
  static Inputs preprocess(const Tensor<float>& clip);

  Tensor<float> forward(const Inputs& in);

  std::int64_t param_count();
  static std::int64_t flop_count(const ConvModelConfig& cfg);

  const ConvModelConfig& config() const { return cfg_; }

 private:
  Tensor<float> motion_conv(const Tensor<float>& x, int layer);
  Tensor<float> appearance_conv(const Tensor<float>& x, int layer);

  ConvModelConfig cfg_;
  std::array<Parameter<float>, 4> mw_, mb_;  // motion branch convs
  std::array<Parameter<float>, 4> aw_, ab_;  // appearance branch convs
  std::array<Parameter<float>, 2> attw_, attb_;
  Parameter<float> dense_w_, dense_b_, out_w_, out_b_;
};

enum class BenchMethod { kConv, kT2, kPos, kChrom, kIca, kTwoBranch };

std::string bench_method_name(BenchMethod m);

/// One Table-4-style row: per-frame latencies in milliseconds plus the
/// analytic cost columns.
struct BenchRow {
  std::string method;
  double preprocessing_ms = 0.0;
  double model_ms = 0.0;
  double total_ms = 0.0;
  double std_ms = 0.0;  // std of per-trial total
  int trials = 0;
  std::int64_t macs_per_frame = 0;  // 0 for the classical methods
  std::int64_t params = 0;
  bool unstable = false;  // trial std > 50% of mean
};

struct BenchReport {
  std::vector<BenchRow> rows;
  void write_table(std::ostream& os) const;
  void write_csv(std::ostream& os) const;
};

/// Pins the calling thread to a single CPU. Returns false if the affinity
/// call is unavailable; benchmarks refuse to run unpinned.
bool pin_to_single_cpu();

/// Times one method over the clip: `trials` measured runs after two
/// discarded warm-ups, single-threaded and pinned. The clip must already be
/// at the model resolution for the neural methods, so their preprocessing
/// column is zero by construction; the two-branch reference pays for its
/// hand-crafted normalization there.
BenchRow bench_method(BenchMethod method, const LabeledClip& clip,
                      int trials = 10, std::uint64_t seed = 0x5EED);

/// Analytic MACs/frame and parameter counts for the neural methods.
BenchReport flop_table(const ConvModelConfig& conv_cfg,
                       const TransformerConfig& t1_cfg,
                       const TransformerConfig& t2_cfg);

}  // namespace pulseforge
