#include "usersim/layers.hpp"

#include <cmath>

namespace usersim::nn {

Tensor init_weight(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  Tensor w({out_dim, in_dim});
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
  return w;
}

void register_dense(ParameterStore& store, const std::string& prefix, std::size_t in_dim,
                    std::size_t out_dim, Rng& rng) {
  store.add(prefix + ".W", init_weight(out_dim, in_dim, rng));
  store.add(prefix + ".b", Tensor::zeros({out_dim}));
}

void register_gru(ParameterStore& store, const std::string& prefix, std::size_t in_dim,
                  std::size_t hidden, Rng& rng) {
  for (const char* gate : {"z", "r", "h"}) {
    store.add(prefix + ".W" + gate, init_weight(hidden, in_dim, rng));
    store.add(prefix + ".U" + gate, init_weight(hidden, hidden, rng));
    store.add(prefix + ".b" + gate, Tensor::zeros({hidden}));
  }
}

ValueId dense_graph(Tape& tape, const BoundStore& store, const std::string& prefix, ValueId x,
                    Activation activation) {
  const ValueId w = store.get(tape, prefix + ".W");
  const ValueId b = store.get(tape, prefix + ".b");
  const ValueId lin = tape.add_row(tape.matmul_nt(x, w), b);
  return activation == Activation::tanh ? tape.tanh_op(lin) : lin;
}

ValueId gru_step_graph(Tape& tape, const BoundStore& store, const std::string& prefix,
                       ValueId h_prev, ValueId x) {
  const auto gate_linear = [&](const char* gate, ValueId recur_in) {
    const ValueId w = store.get(tape, prefix + ".W" + gate);
    const ValueId u = store.get(tape, prefix + ".U" + gate);
    const ValueId b = store.get(tape, prefix + ".b" + gate);
    return tape.add_row(tape.add(tape.matmul_nt(x, w), tape.matmul_nt(recur_in, u)), b);
  };
  const ValueId z = tape.sigmoid_op(gate_linear("z", h_prev));
  const ValueId r = tape.sigmoid_op(gate_linear("r", h_prev));
  const ValueId candidate = tape.tanh_op(gate_linear("h", tape.mul(r, h_prev)));
  // (1 - z) * h + z * c, written as h - z*h + z*c.
  return tape.add(tape.sub(h_prev, tape.mul(z, h_prev)), tape.mul(z, candidate));
}

namespace {

Tensor as_row(const Tensor& v, const std::string& context) {
  if (v.rank() == 1) return Tensor({1, v.numel()}, v.raw());
  if (v.rank() == 2 && v.rows() == 1) return v;
  throw ShapeError(context + ": expected a vector, got " + shape_string(v.shape()));
}

}  // namespace

Tensor dense_forward(const Tensor& x, const DenseParams& p) {
  ParameterStore store;
  store.add("dense.W", p.weight);
  store.add("dense.b", p.bias);
  Tape tape;
  const ValueId in = tape.constant(as_row(x, "dense_forward"));
  const ValueId out = dense_graph(tape, store, "dense", in, p.activation);
  Tensor result({tape.value(out).cols()}, tape.value(out).raw());
  return result;
}

Tensor gru_step(const Tensor& h_prev, const Tensor& x, const GruParams& p) {
  ParameterStore store;
  store.add("gru.Wz", p.wz);
  store.add("gru.Uz", p.uz);
  store.add("gru.bz", p.bz);
  store.add("gru.Wr", p.wr);
  store.add("gru.Ur", p.ur);
  store.add("gru.br", p.br);
  store.add("gru.Wh", p.wh);
  store.add("gru.Uh", p.uh);
  store.add("gru.bh", p.bh);
  Tape tape;
  const ValueId h = tape.constant(as_row(h_prev, "gru_step h_prev"));
  const ValueId in = tape.constant(as_row(x, "gru_step x"));
  const ValueId out = gru_step_graph(tape, store, "gru", h, in);
  return Tensor({tape.value(out).cols()}, tape.value(out).raw());
}

Tensor softmax(const Tensor& logits) {
  if (logits.numel() == 0) throw ShapeError("softmax: empty input");
  Tape tape;
  const ValueId in = tape.constant(as_row(logits, "softmax"));
  const ValueId out = tape.softmax_rows(in);
  return Tensor({tape.value(out).cols()}, tape.value(out).raw());
}

}  // namespace usersim::nn
