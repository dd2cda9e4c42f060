// Copyright 2026 The emil Authors
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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace emil {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Raised for any extent/rank mismatch; the message names the offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when the gradient graph is used incorrectly (second backward, non-scalar root).
class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

// One recorded operation. Leaves have no backward_fn. `seq` is the creation
// index on the owning thread; backward replays nodes in decreasing seq.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

std::uint64_t next_node_seq();
bool grad_enabled();
void set_grad_enabled(bool enabled);

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled()) { detail::set_grad_enabled(false); }
  ~NoGradGuard() { detail::set_grad_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor handle with optional reverse-mode gradient tracking.
///
/// Copies share the underlying storage (handle semantics); use clone() for a
/// deep copy. Results of differentiable ops keep their inputs alive until
/// backward() has run, after which the recorded graph is released.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> values() const;
  /// Writable view; only valid on leaves (parameters, inputs).
  std::span<T> mutable_values();
  T item() const;
  T at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const T> grad() const;
  void zero_grad();

  const char* op() const;
  bool is_leaf() const;

  /// New leaf sharing nothing with this tensor's graph.
  Tensor detach() const;
  Tensor clone() const;

  /// Populates grad() on every requires_grad leaf reachable from this scalar.
  /// The graph is consumed; a second call raises AutogradError.
  void backward() const;

  const NodePtr& node() const { return node_; }
  static Tensor from_node(NodePtr node);

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  const detail::Node<T>& checked() const;

  NodePtr node_;
};

/// Records a new op. `backward` receives the output node (with its grad
/// populated) and must accumulate into the inputs' grads via ensure_grad().
/// When no input requires grad, or recording is disabled, the result is a
/// plain leaf and `backward` is dropped.
template <typename T>
Tensor<T> make_op_result(const char* op, Shape shape, std::vector<T> value,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(detail::Node<T>&)> backward);

/// Leaf copy of `t` converted to another precision; requires_grad is preserved.
template <typename To, typename From>
Tensor<To> precision_cast(const Tensor<From>& t) {
  auto src = t.values();
  std::vector<To> out(src.begin(), src.end());
  return Tensor<To>(t.shape(), std::move(out), t.requires_grad());
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace emil
