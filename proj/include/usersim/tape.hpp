#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "usersim/optim.hpp"
#include "usersim/tensor.hpp"

namespace usersim::nn {

using ValueId = int;

/// Reverse-mode differentiation tape. Forward calls append nodes (creation
/// order is already a topological order); backward() walks the tape in
/// reverse and accumulates d(loss)/d(parameter) into the bound
/// ParameterStore gradient slots.
///
/// All binary ops are elementwise over identical shapes unless stated
/// otherwise; batched tensors are row-major [batch x dim].
class Tape {
 public:
  /// Leaf with no gradient tracking.
  ValueId constant(Tensor v);

  /// Trainable leaf bound to store[name]. Repeated calls for the same entry
  /// return the same node, so shared parameters (e.g. an embedding applied
  /// at every sequence position) accumulate gradients from all their uses.
  ValueId param(ParameterStore& store, const std::string& name);

  /// Reads store[name] as a constant: gradients flow through ops above it
  /// but never accumulate into the store. This is how one network is held
  /// fixed while the other trains.
  ValueId frozen(const ParameterStore& store, const std::string& name);

  /// y = x . w^T for x [B x in], w [out x in] -> [B x out].
  ValueId matmul_nt(ValueId x, ValueId w);
  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);
  /// Broadcasts a rank-1 bias [d] over the rows of x [B x d].
  ValueId add_row(ValueId x, ValueId bias);
  ValueId tanh_op(ValueId x);
  ValueId sigmoid_op(ValueId x);
  /// [B x d1], [B x d2] -> [B x (d1+d2)].
  ValueId concat_cols(ValueId a, ValueId b);
  /// Row-wise softmax with max-shift; rows sum to 1 within roundoff.
  ValueId softmax_rows(ValueId logits);
  /// Sums columns [lo, hi) of x [B x d] -> [B x 1].
  ValueId sum_cols(ValueId x, std::size_t lo, std::size_t hi);
  /// y[b] = x[b, idx[b]] -> [B x 1].
  ValueId gather_cols(ValueId x, std::vector<std::size_t> idx);
  ValueId clamp_min(ValueId x, double floor);
  ValueId log_op(ValueId x);
  ValueId mean_all(ValueId x);
  ValueId sum_all(ValueId x);
  ValueId scale(ValueId x, double c);

  const Tensor& value(ValueId id) const { return nodes_[check(id)].value; }
  const Tensor& grad(ValueId id) const { return nodes_[check(id)].grad; }
  double scalar(ValueId id) const;

  /// Reverse pass from a scalar loss node. May be called once per tape.
  void backward(ValueId loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    // Parameter binding; empty name for non-leaf/constant nodes.
    ParameterStore* store = nullptr;
    std::string param_name;
    std::function<void(Tape&, const Node&)> backprop;
  };

  ValueId push(Tensor value, bool requires_grad,
               std::function<void(Tape&, const Node&)> backprop);
  int check(ValueId id) const;
  Node& node(ValueId id) { return nodes_[check(id)]; }

  std::vector<Node> nodes_;
  std::vector<ValueId> param_nodes_;
  std::map<std::pair<const ParameterStore*, std::string>, ValueId> param_lookup_;
  bool backward_done_ = false;
};

/// A parameter store bound either for training (gradients accumulate) or
/// frozen (values only). Graph builders take this so the same wiring serves
/// both training and inference.
class BoundStore {
 public:
  static BoundStore train(ParameterStore& store) {
    BoundStore b;
    b.mutable_store_ = &store;
    return b;
  }
  static BoundStore freeze(const ParameterStore& store) {
    BoundStore b;
    b.const_store_ = &store;
    return b;
  }

  ValueId get(Tape& tape, const std::string& name) const {
    return mutable_store_ ? tape.param(*mutable_store_, name) : tape.frozen(*const_store_, name);
  }

  bool trainable() const { return mutable_store_ != nullptr; }
  const ParameterStore& store() const { return mutable_store_ ? *mutable_store_ : *const_store_; }

 private:
  ParameterStore* mutable_store_ = nullptr;
  const ParameterStore* const_store_ = nullptr;
};

}  // namespace usersim::nn
