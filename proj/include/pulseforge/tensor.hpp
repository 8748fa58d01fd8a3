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

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pulseforge/common.hpp"

namespace pulseforge {

/// All mapped numeric buffers share Eigen's packet alignment so that
/// vectorized code paths (and therefore float rounding) never depend on
/// where the allocator happened to place a buffer. This is what makes
/// repeated runs bit-identical.
template <typename S>
using AlignedVec = std::vector<S, Eigen::aligned_allocator<S>>;

template <typename Scalar>
class Tape;

namespace detail {

template <typename Scalar>
struct TensorNode {
  Shape shape;
  AlignedVec<Scalar> value;
  AlignedVec<Scalar> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  bool on_tape = false;  // some recorded op produced this node

  std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Scalar(0));
  }
};

}  // namespace detail

/// Dense row-major tensor with shared storage. Copies are shallow handles;
/// the value buffer is treated as immutable once an op has produced it.
template <typename Scalar>
class Tensor {
 public:
  using Node = detail::TensorNode<Scalar>;
  using ArrayMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using ConstArrayMap =
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(static_cast<std::size_t>(numel(t.node_->shape)),
                          Scalar(0));
    return t;
  }

  static Tensor full(Shape shape, Scalar v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.node_->value.begin(), t.node_->value.end(), v);
    return t;
  }

  static Tensor from_data(Shape shape, const Scalar* data,
                          std::int64_t count) {
    require(numel(shape) == count,
            "tensor data length does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(data, data + count);
    return t;
  }

  static Tensor from_data(Shape shape, const std::vector<Scalar>& data) {
    return from_data(std::move(shape), data.data(),
                     static_cast<std::int64_t>(data.size()));
  }

  static Tensor scalar(Scalar v) { return from_data({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t i) const { return node_->shape[i]; }
  std::int64_t ndim() const {
    return static_cast<std::int64_t>(node_->shape.size());
  }
  std::int64_t size() const { return node_->size(); }

  const Scalar* data() const { return node_->value.data(); }
  Scalar* mutable_data() { return node_->value.data(); }
  const AlignedVec<Scalar>& values() const { return node_->value; }

  Scalar operator[](std::int64_t i) const {
    return node_->value[static_cast<std::size_t>(i)];
  }
  Scalar item() const {
    require(size() == 1, "item() requires a scalar tensor");
    return node_->value[0];
  }

  ConstArrayMap array() const { return ConstArrayMap(data(), size()); }
  ArrayMap mutable_array() { return ArrayMap(mutable_data(), size()); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }
  /// True when backward should propagate into or through this tensor.
  bool tracked() const {
    return node_ && (node_->requires_grad || node_->on_tape);
  }

  bool has_grad() const { return !node_->grad.empty(); }
  const AlignedVec<Scalar>& grad() const { return node_->grad; }
  void zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), Scalar(0));
  }

  std::shared_ptr<Node> node() const { return node_; }

  /// Same buffer under a new shape with identical element count.
  Tensor reshaped(Shape shape) const;

 private:
  std::shared_ptr<Node> node_;
};

/// Records the forward ops in creation order, which is already a valid
/// topological order: an op's inputs exist before its output. backward()
/// replays the list once, in reverse.
template <typename Scalar>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Activates a tape for the current thread for the scope's lifetime.
  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(current_) { current_ = &t; }
    ~Scope() { current_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* current() { return current_; }

  void record(std::shared_ptr<detail::TensorNode<Scalar>> out,
              std::function<void()> backward_fn) {
    entries_.push_back({std::move(out), std::move(backward_fn)});
  }

  std::size_t size() const { return entries_.size(); }

  /// Populates dLoss/dLeaf for every requires_grad leaf reachable from loss.
  /// Leaf grads accumulate across calls; interior grads are reset per call.
  void backward(const Tensor<Scalar>& loss) {
    require(loss.size() == 1, "backward() expects a scalar loss");
    require(loss.node()->on_tape,
            "backward() expects the loss to be recorded on this tape");
    for (auto& e : entries_) {
      e.out->grad.assign(e.out->value.size(), Scalar(0));
    }
    loss.node()->grad.assign(1, Scalar(1));
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      it->backward_fn();
    }
  }

 private:
  struct Entry {
    std::shared_ptr<detail::TensorNode<Scalar>> out;
    std::function<void()> backward_fn;
  };
  std::vector<Entry> entries_;
  inline static thread_local Tape* current_ = nullptr;
};

/// Named learnable tensor. Names are dotted paths, unique within a model.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> tensor;

  Parameter() = default;
  Parameter(std::string n, Tensor<Scalar> t)
      : name(std::move(n)), tensor(std::move(t)) {
    tensor.set_requires_grad(true);
  }
};

namespace detail {

/// Register the backward rule for `out` if a tape is active and any input is
/// tracked. Call as record_op(out, fn, in0, in1, ...).
template <typename Scalar, typename... Inputs>
void record_op(const Tensor<Scalar>& out, std::function<void()> backward_fn,
               const Inputs&... inputs) {
  Tape<Scalar>* tape = Tape<Scalar>::current();
  if (!tape) return;
  if (!(inputs.tracked() || ...)) return;
  out.node()->on_tape = true;
  tape->record(out.node(), std::move(backward_fn));
}

template <typename Scalar>
Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> grad_map(
    const std::shared_ptr<TensorNode<Scalar>>& n) {
  n->ensure_grad();
  return {n->grad.data(), static_cast<Eigen::Index>(n->grad.size())};
}

template <typename Scalar>
Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> value_map(
    const std::shared_ptr<TensorNode<Scalar>>& n) {
  return {n->value.data(), static_cast<Eigen::Index>(n->value.size())};
}

template <typename Scalar>
Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> out_grad_map(
    const std::shared_ptr<TensorNode<Scalar>>& n) {
  return {n->grad.data(), static_cast<Eigen::Index>(n->grad.size())};
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(Shape shape) const {
  require(numel(shape) == size(), "reshape must preserve element count");
  Tensor out = Tensor::from_data(std::move(shape), node_->value.data(),
                                 size());
  auto xn = node_;
  auto yn = out.node();
  detail::record_op(
      out,
      [xn, yn] {
        if (!xn->requires_grad && !xn->on_tape) return;
        detail::grad_map(xn) += detail::out_grad_map(yn);
      },
      *this);
  return out;
}

}  // namespace pulseforge
