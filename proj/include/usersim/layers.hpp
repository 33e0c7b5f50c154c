#pragma once

#include <string>

#include "usersim/common.hpp"
#include "usersim/tape.hpp"

namespace usersim::nn {

enum class Activation { identity, tanh };

/// Fully-connected layer parameters: weight [out x in], bias [out].
struct DenseParams {
  Tensor weight;
  Tensor bias;
  Activation activation = Activation::identity;
};

/// GRU cell parameters. Per gate (update z, reset r, candidate h): input
/// weights [H x in], recurrent weights [H x H], bias [H].
struct GruParams {
  Tensor wz, uz, bz;
  Tensor wr, ur, br;
  Tensor wh, uh, bh;
};

/// Scale-aware uniform init: entries in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Tensor init_weight(std::size_t out_dim, std::size_t in_dim, Rng& rng);

/// Registers weight+bias under `prefix + ".W"` / `".b"`; bias starts zero.
void register_dense(ParameterStore& store, const std::string& prefix, std::size_t in_dim,
                    std::size_t out_dim, Rng& rng);

/// Registers the nine GRU tensors under `prefix + ".Wz"`, `".Uz"`, `".bz"`,
/// and so on for gates r and h.
void register_gru(ParameterStore& store, const std::string& prefix, std::size_t in_dim,
                  std::size_t hidden, Rng& rng);

/// y = activation(x . W^T + b) on the tape, reading parameters from the store.
ValueId dense_graph(Tape& tape, const BoundStore& store, const std::string& prefix, ValueId x,
                    Activation activation);
inline ValueId dense_graph(Tape& tape, ParameterStore& store, const std::string& prefix, ValueId x,
                           Activation activation) {
  return dense_graph(tape, BoundStore::train(store), prefix, x, activation);
}

/// One GRU step on the tape:
///   z = sigmoid(x Wz^T + h Uz^T + bz)
///   r = sigmoid(x Wr^T + h Ur^T + br)
///   c = tanh(x Wh^T + (r * h) Uh^T + bh)
///   h' = (1 - z) * h + z * c
ValueId gru_step_graph(Tape& tape, const BoundStore& store, const std::string& prefix,
                       ValueId h_prev, ValueId x);
inline ValueId gru_step_graph(Tape& tape, ParameterStore& store, const std::string& prefix,
                              ValueId h_prev, ValueId x) {
  return gru_step_graph(tape, BoundStore::train(store), prefix, h_prev, x);
}

// Value-level counterparts for single vectors. These run through the same
// tape ops as training, so there is one implementation of the math.
Tensor dense_forward(const Tensor& x, const DenseParams& p);
Tensor gru_step(const Tensor& h_prev, const Tensor& x, const GruParams& p);

/// Numerically stable softmax over a vector (rank-1 or [1 x M]).
Tensor softmax(const Tensor& logits);

}  // namespace usersim::nn
