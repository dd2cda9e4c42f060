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

#include "emil/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace emil {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

namespace {
thread_local std::uint64_t tls_seq = 0;
thread_local bool tls_grad_enabled = true;
}  // namespace

std::uint64_t next_node_seq() { return ++tls_seq; }
bool grad_enabled() { return tls_grad_enabled; }
void set_grad_enabled(bool enabled) { tls_grad_enabled = enabled; }

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ShapeError("tensor extent " + std::to_string(i) + " is zero in shape " +
                       shape_string(shape));
    }
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  node_->seq = detail::next_node_seq();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const detail::Node<T>& Tensor<T>::checked() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return *node_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return checked().shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(s));
  }
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return checked().value.size();
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  return checked().value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  if (!is_leaf()) throw AutogradError("mutable_values() on non-leaf tensor (op " +
                                      std::string(op()) + ")");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  }
  return checked().value[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return checked().requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  if (!is_leaf()) throw AutogradError("set_requires_grad() on non-leaf tensor");
  node_->requires_grad = flag;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return checked().grad.size() == checked().value.size();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) return {};
  return checked().grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  checked();
  node_->grad.clear();
}

template <typename T>
const char* Tensor<T>::op() const {
  return checked().op;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  const auto& n = checked();
  return !n.backward_fn && !n.consumed && n.inputs.empty();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), checked().value, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape(), checked().value, requires_grad());
}

template <typename T>
Tensor<T> Tensor<T>::from_node(NodePtr node) {
  return Tensor(std::move(node));
}

template <typename T>
void Tensor<T>::backward() const {
  const auto& root = checked();
  if (root.value.size() != 1) {
    throw AutogradError("backward() requires a scalar root, got shape " +
                        shape_string(root.shape));
  }
  if (root.consumed) {
    throw AutogradError("backward() called twice on the same graph");
  }
  if (!root.requires_grad) {
    throw AutogradError("backward() on a tensor that does not require grad");
  }

  // Collect every reachable node that participates in differentiation. The
  // shared pointers keep intermediate nodes alive while inputs are released.
  std::vector<NodePtr> order;
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<NodePtr> stack{node_};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    if (n->consumed) throw AutogradError("backward() through an already released graph");
    for (auto& in : n->inputs) {
      if (in->requires_grad) stack.push_back(in);
    }
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });

  node_->ensure_grad()[0] += T(1);
  for (auto& n : order) {
    if (!n->backward_fn) continue;
    n->ensure_grad();
    n->backward_fn(*n);
    n->backward_fn = nullptr;
    n->inputs.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->consumed = true;
  }
  node_->consumed = true;
}

template <typename T>
Tensor<T> make_op_result(const char* op, Shape shape, std::vector<T> value,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(detail::Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(value), false);
  bool needs_grad = false;
  if (detail::grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  auto& node = const_cast<detail::Node<T>&>(*out.node());
  node.op = op;
  if (needs_grad) {
    node.requires_grad = true;
    node.inputs.reserve(inputs.size());
    for (auto& in : inputs) node.inputs.push_back(in.node());
    node.backward_fn = std::move(backward);
  }
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_op_result<float>(const char*, Shape, std::vector<float>,
                                             std::vector<Tensor<float>>,
                                             std::function<void(detail::Node<float>&)>);
template Tensor<double> make_op_result<double>(const char*, Shape, std::vector<double>,
                                               std::vector<Tensor<double>>,
                                               std::function<void(detail::Node<double>&)>);

}  // namespace emil
