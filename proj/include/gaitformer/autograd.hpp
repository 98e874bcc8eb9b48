// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gaitformer/tensor.hpp"

namespace gaitformer {

namespace ag {

/// One node of the reverse-mode tape. The graph is built fresh on every
/// forward pass; outputs hold their inputs alive through `parents`, so the
/// tape dies when the last output handle is dropped. Leaf nodes owned by a
/// model persist across passes and accumulate gradients.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation, same shape as value
  bool requires_grad = false;
  std::string name;  // parameters only
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads. The closure
  // captures the parent shared_ptrs, never the node itself.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor(value.shape());
  }
};

inline void accumulate(Node& n, const Tensor& g) {
  if (!n.requires_grad) return;
  n.ensure_grad();
  double* dst = n.grad.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
}

}  // namespace ag

/// Handle to a tape node. Cheap to copy; copies alias the same node.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor v) {
    Var x;
    x.n_ = std::make_shared<ag::Node>();
    x.n_->value = std::move(v);
    return x;
  }

  /// Trainable leaf: participates in backward and keeps its gradient.
  static Var leaf(Tensor v, std::string name = {}) {
    Var x;
    x.n_ = std::make_shared<ag::Node>();
    x.n_->value = std::move(v);
    x.n_->requires_grad = true;
    x.n_->name = std::move(name);
    return x;
  }

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  Tensor& mutable_value() { return n_->value; }
  const Tensor& grad() const { return n_->grad; }
  Tensor& mutable_grad() { return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }
  const Shape& shape() const { return n_->value.shape(); }
  std::size_t size() const { return n_->value.size(); }

  const std::shared_ptr<ag::Node>& node() const { return n_; }

  static Var from_node(std::shared_ptr<ag::Node> n) {
    Var x;
    x.n_ = std::move(n);
    return x;
  }

 private:
  std::shared_ptr<ag::Node> n_;
};

namespace ag {

/// Builds an op node. requires_grad propagates from the parents.
inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents.reserve(parents.size());
  for (const Var& p : parents) {
    n->parents.push_back(p.node());
    if (p.node()->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) n->backward = std::move(backward);
  return Var::from_node(std::move(n));
}

}  // namespace ag

/// Reverse pass from a scalar value. `seed` is the gradient of the final
/// objective with respect to `loss` (1/batch_size when averaging a batch).
/// Gradients accumulate into every reachable leaf; call zero_grad between
/// optimizer steps, not between the losses of one batch.
inline void backward(const Var& loss, double seed = 1.0) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  if (!loss.node()->requires_grad) return;

  // Iterative post-order DFS; nodes appear after all of their parents.
  std::vector<ag::Node*> order;
  std::unordered_set<ag::Node*> visited;
  std::vector<std::pair<ag::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      ag::Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad(0) += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    ag::Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
}

/// Named trainable tensor plus its accumulated gradient.
class Parameter {
 public:
  Parameter(std::string name, Tensor init)
      : v_(Var::leaf(std::move(init), std::move(name))) {}

  const std::string& name() const { return v_.node()->name; }
  Tensor& value() { return v_.mutable_value(); }
  const Tensor& value() const { return v_.value(); }

  /// Zeros until a backward pass reaches this parameter.
  Tensor& grad() {
    v_.node()->ensure_grad();
    return v_.mutable_grad();
  }

  const Shape& shape() const { return v_.shape(); }
  std::size_t size() const { return v_.size(); }
  Var var() const { return v_; }

  void zero_grad() {
    v_.node()->ensure_grad();
    v_.mutable_grad().fill(0.0);
  }

 private:
  Var v_;
};

/// Ordered collection of a model's parameters. Names are unique; iteration
/// order is registration order, which fixes checkpoint layout and optimizer
/// update order.
class ParamSet {
 public:
  Parameter& add(std::string name, Tensor init) {
    if (index_.count(name)) {
      throw ContractError("duplicate parameter name: " + name);
    }
    params_.emplace_back(name, std::move(init));
    index_[params_.back().name()] = params_.size() - 1;
    return params_.back();
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  Parameter* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void zero_grad_all() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::deque<Parameter> params_;  // deque: stable references across add()
  std::map<std::string, std::size_t> index_;
};

}  // namespace gaitformer
