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

#include "attnagg/tensor.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "attnagg/error.hpp"

namespace attnagg {

namespace detail {

inline constexpr std::size_t kLeaf = std::numeric_limits<std::size_t>::max();

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  NodeId id = 0;
  std::uint64_t generation = 0;
  std::size_t tape_index = kLeaf;
};

}  // namespace detail

namespace {

using detail::TensorImpl;

std::atomic<NodeId> next_node_id{1};
std::atomic<std::uint64_t> next_generation{1};

struct TapeRecord {
  std::string_view kind;
  std::shared_ptr<TensorImpl> output;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  autodiff::BackwardFn backward;
};

struct Tape {
  std::uint64_t generation = next_generation.fetch_add(1);
  std::vector<TapeRecord> records;
  bool grad_enabled = true;
  std::string fault_kind;
};

Tape& CurrentTape() {
  thread_local Tape tape;
  return tape;
}

std::shared_ptr<TensorImpl> NewImpl(Shape shape, std::vector<double> values,
                                    bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  impl->id = next_node_id.fetch_add(1);
  return impl;
}

const TensorImpl& Checked(const std::shared_ptr<TensorImpl>& impl) {
  if (!impl) Fail(ErrorCode::kShapeMismatch, "use of an undefined tensor");
  return *impl;
}

}  // namespace

Tensor MakeTensor(std::shared_ptr<detail::TensorImpl> impl) {
  return Tensor(std::move(impl));
}

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor Tensor::From(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) {
      Fail(ErrorCode::kShapeMismatch,
           "zero extent in shape " + ShapeToString(shape));
    }
  }
  if (NumElements(shape) != data.size()) {
    Fail(ErrorCode::kShapeMismatch,
         "shape " + ShapeToString(shape) + " needs " +
             std::to_string(NumElements(shape)) + " values, got " +
             std::to_string(data.size()));
  }
  return Tensor(NewImpl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  return Full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::Full(Shape shape, double value, bool requires_grad) {
  const auto n = NumElements(shape);
  return From(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return From({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return Checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    Fail(ErrorCode::kInvalidAxis, "axis " + std::to_string(axis) +
                                      " out of range for " + ShapeToString(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return Checked(impl_).values.size(); }

std::span<const double> Tensor::values() const { return Checked(impl_).values; }

std::span<double> Tensor::mutable_values() {
  Checked(impl_);
  return impl_->values;
}

double Tensor::item() const {
  if (numel() != 1) {
    Fail(ErrorCode::kNotScalar, "item() on shape " + ShapeToString(shape()));
  }
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return Checked(impl_).requires_grad; }

void Tensor::set_requires_grad(bool requires_grad) {
  Checked(impl_);
  impl_->requires_grad = requires_grad;
}

bool Tensor::has_grad() const { return !Checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const { return Checked(impl_).grad; }

void Tensor::ZeroGrad() {
  Checked(impl_);
  impl_->grad.clear();
}

NodeId Tensor::node_id() const { return Checked(impl_).id; }

bool Tensor::is_leaf() const {
  return Checked(impl_).tape_index == detail::kLeaf;
}

Tensor Tensor::Detach() const {
  const auto& impl = Checked(impl_);
  return Tensor(NewImpl(impl.shape, impl.values, false));
}

GradientMap Backward(const Tensor& loss) {
  if (!loss.defined()) Fail(ErrorCode::kDetachedGraph, "undefined loss");
  if (loss.numel() != 1) {
    Fail(ErrorCode::kNotScalar,
         "Backward() needs a scalar, got " + ShapeToString(loss.shape()));
  }
  auto& tape = CurrentTape();
  const auto& root = loss.impl();
  if (!root->requires_grad || root->tape_index == detail::kLeaf ||
      root->generation != tape.generation ||
      root->tape_index >= tape.records.size() ||
      tape.records[root->tape_index].output != root) {
    Fail(ErrorCode::kDetachedGraph,
         "loss was not produced by this thread's active graph");
  }

  const std::size_t last = root->tape_index;
  for (std::size_t i = 0; i <= last; ++i) tape.records[i].output->grad.clear();
  root->grad.assign(1, 1.0);

  std::vector<std::vector<double>*> buffers;
  for (std::size_t i = last + 1; i-- > 0;) {
    auto& record = tape.records[i];
    if (record.output->grad.empty()) continue;
    buffers.clear();
    for (auto& input : record.inputs) {
      if (!input->requires_grad) {
        buffers.push_back(nullptr);
        continue;
      }
      if (input->grad.empty()) input->grad.assign(input->values.size(), 0.0);
      buffers.push_back(&input->grad);
    }
    autodiff::InputGrads grads(buffers);
    if (!tape.fault_kind.empty() && record.kind == tape.fault_kind) {
      std::vector<double> scaled = record.output->grad;
      for (auto& g : scaled) g *= 1.5;
      record.backward(scaled, grads);
    } else {
      record.backward(record.output->grad, grads);
    }
  }

  GradientMap result;
  for (std::size_t i = 0; i <= last; ++i) {
    for (auto& input : tape.records[i].inputs) {
      if (input->tape_index == detail::kLeaf && input->requires_grad &&
          !input->grad.empty()) {
        result.try_emplace(input->id, input->grad);
      }
    }
  }
  return result;
}

void ResetGraph() {
  auto& tape = CurrentTape();
  tape.records.clear();
  tape.generation = next_generation.fetch_add(1);
}

std::size_t GraphSize() { return CurrentTape().records.size(); }

bool GradEnabled() { return CurrentTape().grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(CurrentTape().grad_enabled) {
  CurrentTape().grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { CurrentTape().grad_enabled = previous_; }

namespace autodiff {

bool AnyRequiresGrad(const std::vector<Tensor>& inputs) {
  for (const auto& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

Tensor Record(std::string_view kind, Shape shape, std::vector<double> values,
              const std::vector<Tensor>& inputs, BackwardFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      Fail(ErrorCode::kNonFinite,
           "non-finite value produced by " + std::string(kind));
    }
  }
  auto& tape = CurrentTape();
  const bool record = tape.grad_enabled && AnyRequiresGrad(inputs);
  auto impl = NewImpl(std::move(shape), std::move(values), record);
  if (!record) return MakeTensor(std::move(impl));

  TapeRecord entry;
  entry.kind = kind;
  entry.inputs.reserve(inputs.size());
  for (const auto& t : inputs) {
    const auto& in = t.impl();
    if (in->requires_grad && in->tape_index != detail::kLeaf &&
        in->generation != tape.generation) {
      Fail(ErrorCode::kDetachedGraph,
           std::string(kind) + " received a tensor from a discarded graph");
    }
    entry.inputs.push_back(in);
  }
  impl->generation = tape.generation;
  impl->tape_index = tape.records.size();
  entry.output = impl;
  entry.backward = std::move(backward);
  tape.records.push_back(std::move(entry));
  return MakeTensor(std::move(impl));
}

void SetGradientFault(std::string_view kind) { CurrentTape().fault_kind = std::string(kind); }

}  // namespace autodiff

}  // namespace attnagg
