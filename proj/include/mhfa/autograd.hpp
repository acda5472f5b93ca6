// mhfa/autograd.hpp
//
// Copyright 2026  The mhfa-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mhfa/tensor.hpp"

namespace mhfa {

/// A named, persistent tensor owned by a model. Shared ownership is how
/// parameter tying works: two slots holding the same Param are one tensor.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // empty until the first backward pass touches it
  bool trainable = true;

  bool has_grad() const noexcept { return !grad.empty(); }
  void zero_grad() { grad = Tensor(); }
};

using Param = std::shared_ptr<Parameter>;

inline Param make_param(std::string name, Tensor value, bool trainable = true) {
  return std::make_shared<Parameter>(
      Parameter{std::move(name), std::move(value), Tensor(), trainable});
}

inline Param clone_param(const Parameter& p) {
  return make_param(p.name, p.value, p.trainable);
}

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph& graph() const { return *g_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return g_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : g_(g), id_(id) {}

  Graph* g_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of operations recorded in creation order. Node inputs always precede
/// the node, so reverse creation order is a valid topological order for
/// the backward sweep.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t) {
    nodes_.push_back(Node{std::move(t), Tensor(), false, nullptr});
    return Var(this, nodes_.size() - 1);
  }

  /// Frozen parameters enter as constants, so they never receive gradient.
  Var param(const Param& p) {
    if (!p->trainable) return constant(p->value);
    Param keep = p;
    nodes_.push_back(Node{p->value, Tensor(), true,
                          [keep](Graph&, const Tensor& g) {
                            if (keep->grad.empty())
                              keep->grad = Tensor::zeros(keep->value.shape());
                            keep->grad += g;
                          }});
    return Var(this, nodes_.size() - 1);
  }

  /// Records a derived node. The backward function is dropped when no input
  /// requires a gradient.
  Var emit(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return emit(std::move(value), std::vector<Var>(inputs), std::move(fn));
  }

  Var emit(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool rg = false;
    for (const Var& in : inputs) {
      if (in.g_ != this) throw Error("operation mixes variables of different graphs");
      rg = rg || nodes_[in.id_].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), Tensor(), rg, rg ? std::move(fn) : nullptr});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id_].value; }

  /// Gradient of the last backward root w.r.t. `v`; empty if never touched.
  const Tensor& grad(Var v) const { return nodes_[v.id_].grad; }

  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void accumulate(Var v, const Tensor& g) {
    Node& n = nodes_[v.id_];
    if (!n.requires_grad) return;
    if (n.grad.empty())
      n.grad = g;
    else
      n.grad += g;
  }

  /// Reverse sweep from a single-element root. Parameter gradients add onto
  /// whatever the parameters already hold.
  void backward(Var root) {
    if (root.g_ != this) throw Error("backward root belongs to another graph");
    if (nodes_[root.id_].value.size() != 1)
      throw ShapeError("backward root must be a single element, got " +
                       shape_str(nodes_[root.id_].value.shape()));
    for (auto& n : nodes_) n.grad = Tensor();
    if (!nodes_[root.id_].requires_grad) return;
    nodes_[root.id_].grad = Tensor(nodes_[root.id_].value.shape(), 1.0);
    for (std::size_t i = root.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return g_->value(*this); }

}  // namespace mhfa
