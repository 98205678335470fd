/*
 * Copyright 2026 The attnagg Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// Layout is row-major. A rank-0 tensor (empty shape) holds one value and is
// what full reductions return.
//
// Every thread owns one computation graph (a tape). Operations whose inputs
// require gradients append a record to the calling thread's tape; Backward()
// walks the records in exact reverse order of appending. ResetGraph() drops
// the tape, which is what a training loop does once per step. Tensors and
// their graph are never shared across threads.
//
// Gradient accumulation: leaf gradients accumulate across Backward() calls
// until ZeroGrad(); intermediate gradients are recomputed from scratch on
// every call.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace attnagg {

using Shape = std::vector<std::size_t>;
using NodeId = std::uint64_t;

std::size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

namespace detail {
struct TensorImpl;
}  // namespace detail

class Tensor {
 public:
  // An empty handle; most calls on it are errors. Exists so Tensor can live
  // in containers and structs before initialization.
  Tensor() = default;

  static Tensor From(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, double value, bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Writable view for leaves (parameters, inputs). Writing into a tensor that
  // already participates in a recorded graph invalidates that graph.
  std::span<double> mutable_values();
  double operator[](std::size_t flat_index) const { return values()[flat_index]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);
  bool has_grad() const;
  std::span<const double> grad() const;
  void ZeroGrad();

  NodeId node_id() const;
  bool is_leaf() const;

  // Copy of the values with no graph history.
  Tensor Detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  friend Tensor MakeTensor(std::shared_ptr<detail::TensorImpl> impl);

  std::shared_ptr<detail::TensorImpl> impl_;
};

using GradientMap = std::unordered_map<NodeId, std::vector<double>>;

// Runs reverse-mode differentiation from a scalar produced on the current
// thread's tape. Seeds d(loss)/d(loss) = 1 and returns the accumulated
// gradient of every leaf reached, keyed by node id.
GradientMap Backward(const Tensor& loss);

// Drops every record of the calling thread's tape.
void ResetGraph();
std::size_t GraphSize();

bool GradEnabled();

// While alive, operations on this thread record nothing and produce tensors
// that do not require gradients.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Hooks for implementing differentiable operations.
namespace autodiff {

// Gradient accumulators handed to a backward function, one per input. An
// input that does not require gradients has no accumulator.
class InputGrads {
 public:
  explicit InputGrads(std::vector<std::vector<double>*> buffers)
      : buffers_(std::move(buffers)) {}
  bool wants(std::size_t input) const { return buffers_[input] != nullptr; }
  std::span<double> operator[](std::size_t input) { return *buffers_[input]; }

 private:
  std::vector<std::vector<double>*> buffers_;
};

using BackwardFn =
    std::function<void(std::span<const double> grad_out, InputGrads& grads)>;

// Wraps forward values into a tensor, recording `backward` on the tape when
// gradients are enabled and any input requires them.
Tensor Record(std::string_view kind, Shape shape, std::vector<double> values,
              const std::vector<Tensor>& inputs, BackwardFn backward);

bool AnyRequiresGrad(const std::vector<Tensor>& inputs);

// Test hook for the gradient checker: while set, Backward feeds operations
// of this kind an output gradient scaled by 1.5, corrupting their input
// gradients. Empty disables it. Thread-local.
void SetGradientFault(std::string_view kind);

}  // namespace autodiff

}  // namespace attnagg
