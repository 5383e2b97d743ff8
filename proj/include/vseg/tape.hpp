// Copyright 2026 The vseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/reducer.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape over a fixed operator set. Nodes are appended in
/// evaluation order, so every node's inputs precede it and a reverse sweep
/// visits each node after all of its consumers.
template <class T>
class Tape {
 public:
  /// Propagates the node's gradient into its inputs and parameters.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(Reducer* reducer = nullptr) : reducer_(reducer ? reducer : &local_) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor5<T> value, bool requires_grad = false) {
    return push("leaf", {}, std::move(value), requires_grad, nullptr);
  }

  Var record(std::string op, std::vector<Var> inputs, Tensor5<T> value, bool requires_grad, BackwardFn fn) {
    for (const Var& v : inputs)
      if (v.id >= nodes_.size())
        throw ContractError("tape: op '" + op + "' references node " + std::to_string(v.id) +
                            " which is not on the tape (size " + std::to_string(nodes_.size()) + ")");
    return push(std::move(op), std::move(inputs), std::move(value), requires_grad, std::move(fn));
  }

  const Tensor5<T>& value(Var v) const { return node(v).value; }
  const std::string& op(Var v) const { return node(v).op; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  bool has_grad(Var v) const { return node(v).has_grad; }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor5<T>& grad(Var v) {
    Node& nd = node(v);
    if (!nd.has_grad) {
      nd.grad = Tensor5<T>(nd.value.shape());
      nd.has_grad = true;
    }
    return nd.grad;
  }

  void accumulate_grad(Var v, const Tensor5<T>& contribution) {
    Tensor5<T>& g = grad(v);
    require(g.shape() == contribution.shape(), "tape: gradient shape " + contribution.shape().str() +
                                                    " does not match node shape " + g.shape().str());
    T* dst = g.data();
    const T* src = contribution.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  }

  Reducer& reducer() noexcept { return *reducer_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Var>& inputs(Var v) const { return node(v).inputs; }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Interior
  /// gradients are released once consumed; leaf gradients stay readable.
  void backward(Var loss) {
    if (backward_done_) throw ContractError("tape: backward already ran; call reset() before reusing the tape");
    const Node& ln = node(loss);
    if (ln.value.size() != 1)
      throw ContractError("tape: loss must be a scalar (1x1x1x1x1), got " + ln.value.shape().str());
    backward_done_ = true;
    grad(loss).fill(T{1});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& nd = nodes_[i];
      if (!nd.has_grad || !nd.requires_grad || !nd.backward) continue;
      nd.backward(*this, i);
      nd.grad = Tensor5<T>();
      nd.has_grad = false;
      nd.released = true;
    }
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

 private:
  struct Node {
    std::string op;
    std::vector<Var> inputs;
    Tensor5<T> value;
    Tensor5<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    bool released = false;
    BackwardFn backward;
  };

  Var push(std::string op, std::vector<Var> inputs, Tensor5<T> value, bool requires_grad, BackwardFn fn) {
    Node nd;
    nd.op = std::move(op);
    nd.inputs = std::move(inputs);
    nd.value = std::move(value);
    nd.requires_grad = requires_grad;
    nd.backward = std::move(fn);
    nodes_.push_back(std::move(nd));
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw ContractError("tape: dangling node reference " + std::to_string(v.id));
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("tape: dangling node reference " + std::to_string(v.id));
    return nodes_[v.id];
  }

  LocalReducer local_;
  Reducer* reducer_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace vseg
