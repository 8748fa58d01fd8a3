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

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulseforge/common.hpp"
#include "pulseforge/tensor.hpp"

namespace pulseforge {

static_assert(std::endian::native == std::endian::little,
              "weights payloads are little-endian");

/// Named, shaped parameter collection with deterministic serialization.
///
/// File layout: one UTF-8 JSON line
///   {"config": {...}, "tensors": [{"name","shape","dtype"}, ...]}
/// terminated by '\n', followed by the concatenated row-major little-endian
/// payloads in header order. The loader verifies the total byte length.
class ModelWeights {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::string dtype;  // "f32" | "f64"
    std::vector<unsigned char> bytes;
  };

  template <typename S>
  static constexpr const char* dtype_name() {
    if constexpr (std::is_same_v<S, float>) {
      return "f32";
    } else {
      static_assert(std::is_same_v<S, double>, "unsupported scalar");
      return "f64";
    }
  }

  template <typename S>
  void add(const std::string& name, const Shape& shape, const S* data,
           std::int64_t count) {
    require(index_.find(name) == index_.end(),
            "duplicate weight name: " + name);
    require(numel(shape) == count, "weight size mismatch for " + name);
    Entry e;
    e.name = name;
    e.shape = shape;
    e.dtype = dtype_name<S>();
    e.bytes.resize(static_cast<std::size_t>(count) * sizeof(S));
    std::memcpy(e.bytes.data(), data, e.bytes.size());
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
  }

  template <typename S>
  void add_tensor(const std::string& name, const Tensor<S>& t) {
    add(name, t.shape(), t.data(), t.size());
  }

  template <typename S>
  void add_vector(const std::string& name, const std::vector<S>& v) {
    add(name, Shape{static_cast<std::int64_t>(v.size())}, v.data(),
        static_cast<std::int64_t>(v.size()));
  }

  bool contains(const std::string& name) const {
    return index_.find(name) != index_.end();
  }

  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "missing weight: " + name);
    return entries_[it->second];
  }

  const std::vector<Entry>& entries() const { return entries_; }

  /// Reads back as the stored scalar type; converting loads are explicit.
  template <typename S>
  std::vector<S> values(const std::string& name) const {
    const Entry& e = entry(name);
    std::vector<S> out(static_cast<std::size_t>(numel(e.shape)));
    if (e.dtype == dtype_name<S>()) {
      std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    } else if (e.dtype == "f32") {
      const float* p = reinterpret_cast<const float*>(e.bytes.data());
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<S>(p[i]);
    } else {
      const double* p = reinterpret_cast<const double*>(e.bytes.data());
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<S>(p[i]);
    }
    return out;
  }

  template <typename S>
  Tensor<S> tensor(const std::string& name) const {
    return Tensor<S>::from_data(entry(name).shape, values<S>(name));
  }

  nlohmann::json& config() { return config_; }
  const nlohmann::json& config() const { return config_; }

  void save(const std::string& path) const {
    nlohmann::json header;
    header["config"] = config_.is_null() ? nlohmann::json::object() : config_;
    auto tensors = nlohmann::json::array();
    for (const auto& e : entries_) {
      tensors.push_back(
          {{"name", e.name}, {"shape", e.shape}, {"dtype", e.dtype}});
    }
    header["tensors"] = std::move(tensors);
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "cannot open weights file for writing: " + path);
    f << header.dump() << '\n';
    for (const auto& e : entries_) {
      f.write(reinterpret_cast<const char*>(e.bytes.data()),
              static_cast<std::streamsize>(e.bytes.size()));
    }
    f.flush();
    require(f.good(), "failed writing weights file: " + path);
  }

  static ModelWeights load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f.good()) throw CorruptFileError("cannot open weights file: " + path);
    std::string line;
    if (!std::getline(f, line)) {
      throw CorruptFileError("weights file has no header: " + path);
    }
    nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded() || !header.contains("tensors")) {
      throw CorruptFileError("weights header is not valid JSON: " + path);
    }
    ModelWeights w;
    if (header.contains("config")) w.config_ = header["config"];
    std::size_t expected = 0;
    for (const auto& t : header["tensors"]) {
      Entry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      e.dtype = t.at("dtype").get<std::string>();
      if (e.dtype != "f32" && e.dtype != "f64") {
        throw CorruptFileError("unknown dtype in weights header: " + e.dtype);
      }
      const std::size_t bytes = static_cast<std::size_t>(numel(e.shape)) *
                                (e.dtype == "f32" ? 4 : 8);
      expected += bytes;
      e.bytes.resize(bytes);
      w.index_[e.name] = w.entries_.size();
      w.entries_.push_back(std::move(e));
    }
    const std::streampos payload_start = f.tellg();
    f.seekg(0, std::ios::end);
    const std::size_t available =
        static_cast<std::size_t>(f.tellg() - payload_start);
    if (available != expected) {
      throw CorruptFileError("weights payload length mismatch: expected " +
                             std::to_string(expected) + " bytes, found " +
                             std::to_string(available));
    }
    f.seekg(payload_start);
    for (auto& e : w.entries_) {
      f.read(reinterpret_cast<char*>(e.bytes.data()),
             static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!f.good()) throw CorruptFileError("truncated weights file: " + path);
    return w;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  nlohmann::json config_;
};

}  // namespace pulseforge
