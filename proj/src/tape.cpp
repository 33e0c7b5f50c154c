#include "usersim/tape.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace usersim::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

MatMap as_matrix(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

void require_rank2(const Tensor& t, const std::string& context) {
  if (t.rank() != 2) {
    throw ShapeError(context + ": expected a rank-2 tensor, got " + shape_string(t.shape()));
  }
}

}  // namespace

ValueId Tape::push(Tensor value, bool requires_grad,
                   std::function<void(Tape&, const Node&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<ValueId>(nodes_.size()) - 1;
}

int Tape::check(ValueId id) const {
  if (id < 0 || id >= static_cast<ValueId>(nodes_.size())) {
    throw ContractError("invalid tape node id " + std::to_string(id));
  }
  return id;
}

double Tape::scalar(ValueId id) const {
  const Tensor& v = value(id);
  if (v.numel() != 1) {
    throw ContractError("expected a scalar node, got shape " + shape_string(v.shape()));
  }
  return v[0];
}

ValueId Tape::constant(Tensor v) { return push(std::move(v), false, nullptr); }

ValueId Tape::param(ParameterStore& store, const std::string& name) {
  const auto key = std::make_pair(static_cast<const ParameterStore*>(&store), name);
  auto it = param_lookup_.find(key);
  if (it != param_lookup_.end()) {
    if (!nodes_[it->second].requires_grad) {
      throw ContractError("parameter " + name + " already bound frozen on this tape");
    }
    return it->second;
  }
  const ValueId id = push(store.value(name), true, nullptr);
  nodes_[id].store = &store;
  nodes_[id].param_name = name;
  param_lookup_.emplace(key, id);
  param_nodes_.push_back(id);
  return id;
}

ValueId Tape::frozen(const ParameterStore& store, const std::string& name) {
  const auto key = std::make_pair(&store, name);
  auto it = param_lookup_.find(key);
  if (it != param_lookup_.end()) {
    if (nodes_[it->second].requires_grad) {
      throw ContractError("parameter " + name + " already bound trainable on this tape");
    }
    return it->second;
  }
  const ValueId id = push(store.value(name), false, nullptr);
  param_lookup_.emplace(key, id);
  return id;
}

ValueId Tape::matmul_nt(ValueId x, ValueId w) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  require_rank2(xv, "matmul_nt lhs");
  require_rank2(wv, "matmul_nt weight");
  if (xv.cols() != wv.cols()) {
    throw ShapeError("matmul_nt: input dim " + std::to_string(xv.cols()) +
                     " does not match weight columns " + std::to_string(wv.cols()));
  }
  Tensor out({xv.rows(), wv.rows()});
  as_matrix(out) = as_matrix(xv) * as_matrix(wv).transpose();
  const bool rg = nodes_[x].requires_grad || nodes_[w].requires_grad;
  return push(std::move(out), rg, [x, w](Tape& t, const Node& self) {
    const auto dy = as_matrix(self.grad);
    if (t.nodes_[x].requires_grad) {
      as_matrix(t.nodes_[x].grad) += dy * as_matrix(t.nodes_[w].value);
    }
    if (t.nodes_[w].requires_grad) {
      as_matrix(t.nodes_[w].grad) += dy.transpose() * as_matrix(t.nodes_[x].value);
    }
  });
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(out), rg, [a, b](Tape& t, const Node& self) {
    for (const ValueId p : {a, b}) {
      if (!t.nodes_[p].requires_grad) continue;
      Tensor& g = t.nodes_[p].grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

ValueId Tape::sub(ValueId a, ValueId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "sub");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(out), rg, [a, b](Tape& t, const Node& self) {
    if (t.nodes_[a].requires_grad) {
      Tensor& g = t.nodes_[a].grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (t.nodes_[b].requires_grad) {
      Tensor& g = t.nodes_[b].grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

ValueId Tape::mul(ValueId a, ValueId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(out), rg, [a, b](Tape& t, const Node& self) {
    if (t.nodes_[a].requires_grad) {
      Tensor& g = t.nodes_[a].grad;
      const Tensor& other = t.nodes_[b].value;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * other[i];
    }
    if (t.nodes_[b].requires_grad) {
      Tensor& g = t.nodes_[b].grad;
      const Tensor& other = t.nodes_[a].value;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * other[i];
    }
  });
}

ValueId Tape::add_row(ValueId x, ValueId bias) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(bias);
  require_rank2(xv, "add_row input");
  if (bv.numel() != xv.cols()) {
    throw ShapeError("add_row: bias length " + std::to_string(bv.numel()) +
                     " does not match columns " + std::to_string(xv.cols()));
  }
  Tensor out(xv.shape());
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
  const bool rg = nodes_[x].requires_grad || nodes_[bias].requires_grad;
  return push(std::move(out), rg, [x, bias, rows, cols](Tape& t, const Node& self) {
    if (t.nodes_[x].requires_grad) {
      Tensor& g = t.nodes_[x].grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (t.nodes_[bias].requires_grad) {
      Tensor& g = t.nodes_[bias].grad;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
    }
  });
}

ValueId Tape::tanh_op(ValueId x) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(xv[i]);
  return push(std::move(out), nodes_[x].requires_grad, [x](Tape& t, const Node& self) {
    if (!t.nodes_[x].requires_grad) return;
    Tensor& g = t.nodes_[x].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
    }
  });
}

ValueId Tape::sigmoid_op(ValueId x) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return push(std::move(out), nodes_[x].requires_grad, [x](Tape& t, const Node& self) {
    if (!t.nodes_[x].requires_grad) return;
    Tensor& g = t.nodes_[x].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      g[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
    }
  });
}

ValueId Tape::concat_cols(ValueId a, ValueId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_rank2(av, "concat_cols lhs");
  require_rank2(bv, "concat_cols rhs");
  if (av.rows() != bv.rows()) {
    throw ShapeError("concat_cols: row mismatch " + std::to_string(av.rows()) + " vs " +
                     std::to_string(bv.rows()));
  }
  const std::size_t rows = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) out[r * (ca + cb) + c] = av[r * ca + c];
    for (std::size_t c = 0; c < cb; ++c) out[r * (ca + cb) + ca + c] = bv[r * cb + c];
  }
  const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(out), rg, [a, b, rows, ca, cb](Tape& t, const Node& self) {
    if (t.nodes_[a].requires_grad) {
      Tensor& g = t.nodes_[a].grad;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) g[r * ca + c] += self.grad[r * (ca + cb) + c];
    }
    if (t.nodes_[b].requires_grad) {
      Tensor& g = t.nodes_[b].grad;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) g[r * cb + c] += self.grad[r * (ca + cb) + ca + c];
    }
  });
}

ValueId Tape::softmax_rows(ValueId logits) {
  const Tensor& lv = value(logits);
  require_rank2(lv, "softmax_rows");
  if (lv.cols() == 0) throw ShapeError("softmax_rows: empty rows");
  const std::size_t rows = lv.rows(), cols = lv.cols();
  Tensor out(lv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = lv.data() + r * cols;
    double* po = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      po[c] = std::exp(in[c] - mx);
      sum += po[c];
    }
    for (std::size_t c = 0; c < cols; ++c) po[c] /= sum;
  }
  return push(std::move(out), nodes_[logits].requires_grad,
              [logits, rows, cols](Tape& t, const Node& self) {
                if (!t.nodes_[logits].requires_grad) return;
                Tensor& g = t.nodes_[logits].grad;
                for (std::size_t r = 0; r < rows; ++r) {
                  const double* y = self.value.data() + r * cols;
                  const double* dy = self.grad.data() + r * cols;
                  double dot = 0.0;
                  for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
                  for (std::size_t c = 0; c < cols; ++c) {
                    g[r * cols + c] += y[c] * (dy[c] - dot);
                  }
                }
              });
}

ValueId Tape::sum_cols(ValueId x, std::size_t lo, std::size_t hi) {
  const Tensor& xv = value(x);
  require_rank2(xv, "sum_cols");
  if (lo >= hi || hi > xv.cols()) {
    throw ShapeError("sum_cols: bad column range [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + ") for " + std::to_string(xv.cols()) + " columns");
  }
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor out({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = lo; c < hi; ++c) s += xv[r * cols + c];
    out[r] = s;
  }
  return push(std::move(out), nodes_[x].requires_grad,
              [x, lo, hi, rows, cols](Tape& t, const Node& self) {
                if (!t.nodes_[x].requires_grad) return;
                Tensor& g = t.nodes_[x].grad;
                for (std::size_t r = 0; r < rows; ++r)
                  for (std::size_t c = lo; c < hi; ++c) g[r * cols + c] += self.grad[r];
              });
}

ValueId Tape::gather_cols(ValueId x, std::vector<std::size_t> idx) {
  const Tensor& xv = value(x);
  require_rank2(xv, "gather_cols");
  if (idx.size() != xv.rows()) {
    throw ShapeError("gather_cols: need one index per row");
  }
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (const std::size_t c : idx) {
    if (c >= cols) throw ShapeError("gather_cols: column index out of range");
  }
  Tensor out({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) out[r] = xv[r * cols + idx[r]];
  return push(std::move(out), nodes_[x].requires_grad,
              [x, idx = std::move(idx), rows, cols](Tape& t, const Node& self) {
                if (!t.nodes_[x].requires_grad) return;
                Tensor& g = t.nodes_[x].grad;
                for (std::size_t r = 0; r < rows; ++r) g[r * cols + idx[r]] += self.grad[r];
              });
}

ValueId Tape::clamp_min(ValueId x, double floor) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(xv[i], floor);
  return push(std::move(out), nodes_[x].requires_grad, [x, floor](Tape& t, const Node& self) {
    if (!t.nodes_[x].requires_grad) return;
    Tensor& g = t.nodes_[x].grad;
    const Tensor& in = t.nodes_[x].value;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (in[i] > floor) g[i] += self.grad[i];
    }
  });
}

ValueId Tape::log_op(ValueId x) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::log(xv[i]);
  return push(std::move(out), nodes_[x].requires_grad, [x](Tape& t, const Node& self) {
    if (!t.nodes_[x].requires_grad) return;
    Tensor& g = t.nodes_[x].grad;
    const Tensor& in = t.nodes_[x].value;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] / in[i];
  });
}

ValueId Tape::mean_all(ValueId x) {
  const Tensor& xv = value(x);
  const double n = static_cast<double>(xv.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  Tensor out({1, 1});
  out[0] = s / n;
  return push(std::move(out), nodes_[x].requires_grad, [x, n](Tape& t, const Node& self) {
    if (!t.nodes_[x].requires_grad) return;
    Tensor& g = t.nodes_[x].grad;
    const double d = self.grad[0] / n;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += d;
  });
}

ValueId Tape::sum_all(ValueId x) {
  const Tensor& xv = value(x);
  double s = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  Tensor out({1, 1});
  out[0] = s;
  return push(std::move(out), nodes_[x].requires_grad, [x](Tape& t, const Node& self) {
    if (!t.nodes_[x].requires_grad) return;
    Tensor& g = t.nodes_[x].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
  });
}

ValueId Tape::scale(ValueId x, double c) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * xv[i];
  return push(std::move(out), nodes_[x].requires_grad, [x, c](Tape& t, const Node& self) {
    if (!t.nodes_[x].requires_grad) return;
    Tensor& g = t.nodes_[x].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += c * self.grad[i];
  });
}

void Tape::backward(ValueId loss) {
  check(loss);
  if (backward_done_) throw ContractError("backward() may be called once per tape");
  backward_done_ = true;
  if (value(loss).numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(value(loss).shape()));
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor::zeros(n.value.shape());
  }
  if (!nodes_[loss].requires_grad) {
    // Loss does not depend on any parameter; all gradients stay zero.
    return;
  }
  nodes_[loss].grad[0] = 1.0;
  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backprop) n.backprop(*this, n);
  }
  for (const ValueId id : param_nodes_) {
    Node& n = nodes_[id];
    Tensor& slot = n.store->grad(n.param_name);
    for (std::size_t i = 0; i < slot.numel(); ++i) slot[i] += n.grad[i];
  }
}

}  // namespace usersim::nn
