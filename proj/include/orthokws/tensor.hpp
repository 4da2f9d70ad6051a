// Copyright 2026 The orthokws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major tensors with define-by-run reverse-mode differentiation.
//
// Every operation in ops.hpp allocates a fresh node that remembers its inputs
// and a closure propagating the output adjoint into them. backward() collects
// the nodes reachable from a scalar loss and replays their closures in reverse
// creation order, so each operation is visited exactly once.

#ifndef ORTHOKWS_TENSOR_HPP_
#define ORTHOKWS_TENSOR_HPP_

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace orthokws {

/// Raised when tensor extents do not fit an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for invalid hyperparameters or layer configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces or receives a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

inline std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = next_sequence();
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs that require grad.
  std::function<void(Node&)> backward_fn;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const std::size_t n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value),
                  requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor(Shape{}, {value}, requires_grad);
  }

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    for (std::size_t e : shape) {
      if (e == 0) {
        throw DimensionError("tensor extents must be positive, got " +
                             shape_str(shape));
      }
    }
    if (numel_of(shape) != data.size()) {
      throw DimensionError("shape " + shape_str(shape) + " holds " +
                           std::to_string(numel_of(shape)) +
                           " values but data has " +
                           std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad.assign(node_->data.size(), 0.0);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op_name() const { return node_->op; }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  double item() const {
    if (numel() != 1) {
      throw DimensionError("item() needs a single-element tensor, got " +
                           shape_str(shape()));
    }
    return node_->data[0];
  }
  double operator[](std::size_t i) const { return node_->data[i]; }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  /// Same values, no history, no gradient.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  /// Stable identity used by optimizers and checkpoint maps.
  const void* id() const { return node_.get(); }

  // Internal hook for ops.hpp.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// The executed operations reachable from a root, in creation order.
class Graph {
 public:
  static Graph collect(const Tensor& root) {
    Graph graph;
    std::vector<detail::Node*> stack{root.node().get()};
    std::unordered_set<detail::Node*> seen{root.node().get()};
    while (!stack.empty()) {
      detail::Node* n = stack.back();
      stack.pop_back();
      if (n->backward_fn) graph.order_.push_back(n);
      for (const auto& in : n->inputs) {
        if (in->requires_grad && seen.insert(in.get()).second) {
          stack.push_back(in.get());
        }
      }
    }
    std::sort(graph.order_.begin(), graph.order_.end(),
              [](const detail::Node* a, const detail::Node* b) {
                return a->seq < b->seq;
              });
    return graph;
  }

  std::size_t size() const { return order_.size(); }

  std::vector<const char*> op_names() const {
    std::vector<const char*> names;
    for (const auto* n : order_) names.push_back(n->op);
    return names;
  }

  /// Runs every recorded closure once, newest first.
  void run_backward() {
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      (*it)->backward_fn(**it);
    }
  }

 private:
  std::vector<detail::Node*> order_;
};

/// Accumulates d(loss)/d(t) into t.grad for every tensor t that requires grad.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::logic_error("backward() needs a scalar loss, got " +
                           (loss.defined() ? shape_str(loss.shape())
                                           : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;
  loss.node()->grad[0] += 1.0;
  Graph::collect(loss).run_backward();
}

}  // namespace orthokws

#endif  // ORTHOKWS_TENSOR_HPP_
