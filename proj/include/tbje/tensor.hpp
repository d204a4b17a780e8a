/* Copyright 2026 The TBJE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tbje/rng.hpp"

namespace tbje {

using Shape = std::vector<std::size_t>;

/// Per-row validity flags (1 = real row, 0 = padding). An empty mask means
/// every row is valid.
using Mask = std::vector<std::uint8_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;
class BackwardContext;

using BackwardFn = std::function<void(std::span<const double> grad_out, BackwardContext& ctx)>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  // Set for op outputs recorded on a tape.
  Tape* tape = nullptr;
  std::uint64_t generation = 0;
};

}  // namespace detail

/// Dense row-major array of doubles.
///
/// A Tensor is a cheap handle: copies share the same buffer, and the buffer
/// lives as long as any handle or any tape entry refers to it. Use clone() for
/// an independent copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Rank-1 tensor.
  static Tensor vector(std::vector<double> values);
  /// Rank-2 tensor from nested rows; rows must be equally long.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t extent(std::size_t axis) const;
  /// First extent of a rank-2 tensor.
  std::size_t rows() const;
  /// Last extent.
  std::size_t cols() const;

  std::span<const double> data() const { return node_->value; }
  /// Writable view; only leaves (tensors not produced by a recorded op) may be
  /// mutated.
  std::span<double> mutable_data();

  double item() const;
  double operator[](std::size_t flat) const { return node_->value[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad() { node_->grad.clear(); }

  /// Deep copy of values; the copy is a leaf with the same requires_grad flag
  /// and no gradient.
  Tensor clone() const;
  /// Copy of values with no tape participation.
  Tensor detach() const;
  /// Copy reinterpreted with a new shape of equal element count (not
  /// differentiable; used on inputs).
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape;
  friend class BackwardContext;
  friend Tensor make_op_result(std::string_view, Shape, std::vector<double>,
                               std::span<const Tensor>, BackwardFn);
  friend void backward(const Tensor& loss);

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

/// Gives a backward function access to the inputs of the op being reversed.
class BackwardContext {
 public:
  /// Value of input `i` as seen in the forward pass.
  std::span<const double> value(std::size_t i) const;
  const Shape& shape(std::size_t i) const;
  /// Gradient accumulator of input `i`, or an empty span if that input does
  /// not need a gradient. Contributions must be added, never assigned.
  std::span<double> grad(std::size_t i) const;

 private:
  friend class Tape;
  explicit BackwardContext(std::span<const std::shared_ptr<detail::Node>> inputs)
      : inputs_(inputs) {}
  std::span<const std::shared_ptr<detail::Node>> inputs_;
};

/// Ordered record of the differentiable ops executed while it is active.
///
/// Recording happens only inside a TapeScope and only for ops with at least
/// one input that requires a gradient. A tape may be replayed backward once;
/// clear() releases every intermediate buffer and makes it reusable.
class Tape {
 public:
  struct Entry {
    std::string_view op;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::shared_ptr<detail::Node> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void clear();

 private:
  friend Tensor make_op_result(std::string_view, Shape, std::vector<double>,
                               std::span<const Tensor>, BackwardFn);
  friend void backward(const Tensor& loss);

  void record(std::string_view op, std::span<const Tensor> inputs,
              std::shared_ptr<detail::Node> output, BackwardFn fn);
  void run_backward(const std::shared_ptr<detail::Node>& loss);

  std::vector<Entry> entries_;
  bool consumed_ = false;
  std::uint64_t generation_ = 1;
};

/// Makes `tape` the recording target of the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

/// Tape currently recording on this thread, or nullptr.
Tape* active_tape();

/// Builds the result of a differentiable op. `backward` is recorded only when
/// a tape is active and some input requires a gradient. This is also the
/// extension point for ops defined outside the library.
Tensor make_op_result(std::string_view op, Shape shape, std::vector<double> values,
                      std::span<const Tensor> inputs, BackwardFn backward);

/// Reverse sweep from a scalar loss over the tape that produced it. Leaf
/// gradients accumulate across calls; call zero_grad() between steps.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Differentiable primitives. Elementwise ops accept any rank; matrix ops
// require rank 2. "Last axis" ops work on rows of any rank.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// x[..., j] + bias[j]
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Numerically stable softmax along `axis`. Entries equal to -inf are treated
/// as excluded (weight exactly 0); a slice that is entirely -inf is an error.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Sets columns j of a rank-2 tensor with mask[j] == 0 to -inf.
Tensor mask_columns(const Tensor& x, const Mask& mask);
/// Normalizes each row over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
/// Columns [begin, end) of the last axis.
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);
/// Rows [begin, end) of the first axis.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Inverted dropout. With rng == nullptr or p == 0 this returns `x` itself.
Tensor dropout(const Tensor& x, double p, Rng* rng);
/// Mean softmax cross-entropy of logits [batch x classes] against class ids.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);
/// Mean sigmoid binary cross-entropy over every entry; targets in {0, 1}.
Tensor binary_cross_entropy_with_logits(const Tensor& logits, const Tensor& targets);

}  // namespace tbje
