#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "usersim/grad_check.hpp"
#include "usersim/layers.hpp"
#include "usersim/optim.hpp"
#include "usersim/tape.hpp"

using namespace usersim;
using namespace usersim::nn;

namespace {

// Independent scalar evaluation of the GRU gate equations, used as the
// oracle for the tape implementation.
std::vector<double> reference_gru_step(const std::vector<double>& h, const std::vector<double>& x,
                                       const GruParams& p) {
  const std::size_t hidden = h.size();
  const auto linear = [&](const Tensor& w, const Tensor& u, const Tensor& b,
                          const std::vector<double>& recur) {
    std::vector<double> out(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < x.size(); ++j) s += w.at(i, j) * x[j];
      for (std::size_t j = 0; j < hidden; ++j) s += u.at(i, j) * recur[j];
      out[i] = s;
    }
    return out;
  };
  const auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };

  const auto z_lin = linear(p.wz, p.uz, p.bz, h);
  const auto r_lin = linear(p.wr, p.ur, p.br, h);
  std::vector<double> z(hidden), r(hidden);
  for (std::size_t i = 0; i < hidden; ++i) {
    z[i] = sigmoid(z_lin[i]);
    r[i] = sigmoid(r_lin[i]);
  }
  std::vector<double> rh(hidden);
  for (std::size_t i = 0; i < hidden; ++i) rh[i] = r[i] * h[i];
  const auto c_lin = linear(p.wh, p.uh, p.bh, rh);
  std::vector<double> out(hidden);
  for (std::size_t i = 0; i < hidden; ++i) {
    const double c = std::tanh(c_lin[i]);
    out[i] = (1.0 - z[i]) * h[i] + z[i] * c;
  }
  return out;
}

GruParams random_gru(std::size_t in_dim, std::size_t hidden, std::uint64_t seed) {
  Rng rng(seed);
  GruParams p;
  p.wz = init_weight(hidden, in_dim, rng);
  p.uz = init_weight(hidden, hidden, rng);
  p.bz = init_weight(hidden, 1, rng);
  p.bz = Tensor({hidden}, p.bz.raw());
  p.wr = init_weight(hidden, in_dim, rng);
  p.ur = init_weight(hidden, hidden, rng);
  p.br = Tensor({hidden}, init_weight(hidden, 1, rng).raw());
  p.wh = init_weight(hidden, in_dim, rng);
  p.uh = init_weight(hidden, hidden, rng);
  p.bh = Tensor({hidden}, init_weight(hidden, 1, rng).raw());
  return p;
}

GruParams zero_gru(std::size_t in_dim, std::size_t hidden) {
  GruParams p;
  p.wz = Tensor::zeros({hidden, in_dim});
  p.uz = Tensor::zeros({hidden, hidden});
  p.bz = Tensor::zeros({hidden});
  p.wr = p.wz;
  p.ur = p.uz;
  p.br = p.bz;
  p.wh = p.wz;
  p.uh = p.uz;
  p.bh = p.bz;
  return p;
}

}  // namespace

TEST_CASE("tensor shape checks") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  Tensor bad = Tensor::row_vector({1.0, std::nan("")});
  CHECK_FALSE(bad.all_finite());
  CHECK_THROWS_AS(bad.require_finite("bad"), NumericError);
}

TEST_CASE("dense_forward hand cases") {
  SUBCASE("zero weights with tanh give zero") {
    DenseParams p{Tensor::zeros({2, 2}), Tensor::zeros({2}), Activation::tanh};
    const Tensor y = dense_forward(Tensor::row_vector({0.4, -1.7}), p);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
  }
  SUBCASE("identity matrix passes input through") {
    DenseParams p{Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::zeros({2}), Activation::identity};
    const Tensor y = dense_forward(Tensor::row_vector({0.3, -0.7}), p);
    CHECK(y[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(-0.7).epsilon(1e-15));
  }
  SUBCASE("hand matrix multiply") {
    DenseParams p{Tensor::matrix(2, 2, {1, 2, 0, -1}), Tensor({2}, {0.5, 0.0}),
                  Activation::identity};
    const Tensor y = dense_forward(Tensor::row_vector({1, 1}), p);
    CHECK(y[0] == doctest::Approx(3.5).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-15));
  }
  SUBCASE("dimension mismatch throws") {
    DenseParams p{Tensor::zeros({2, 3}), Tensor::zeros({2}), Activation::identity};
    CHECK_THROWS_AS(dense_forward(Tensor::row_vector({1, 1}), p), ShapeError);
  }
}

TEST_CASE("gru_step hand cases") {
  SUBCASE("all-zero cell maps zero state to zero") {
    const GruParams p = zero_gru(3, 2);
    const Tensor h = gru_step(Tensor::row_vector({0, 0}), Tensor::row_vector({1, 2, 3}), p);
    CHECK(h[0] == 0.0);
    CHECK(h[1] == 0.0);
  }
  SUBCASE("all-zero cell halves the previous state") {
    // z = r = 0.5 and candidate 0, so h' = 0.5 h.
    const GruParams p = zero_gru(3, 2);
    const Tensor h = gru_step(Tensor::row_vector({0.8, -0.2}), Tensor::row_vector({1, 2, 3}), p);
    CHECK(h[0] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(h[1] == doctest::Approx(-0.1).epsilon(1e-15));
  }
  SUBCASE("random cell matches scalar gate evaluation") {
    const GruParams p = random_gru(3, 2, 20240517);
    const std::vector<double> h0 = {0.3, -0.6};
    const std::vector<double> x = {0.25, -1.5, 0.75};
    const Tensor got = gru_step(Tensor({2}, h0), Tensor({3}, x), p);
    const std::vector<double> want = reference_gru_step(h0, x, p);
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
    }
  }
  SUBCASE("shape mismatch throws") {
    const GruParams p = zero_gru(3, 2);
    CHECK_THROWS_AS(gru_step(Tensor::row_vector({0, 0}), Tensor::row_vector({1, 2}), p),
                    ShapeError);
  }
}

TEST_CASE("softmax values and properties") {
  SUBCASE("uniform logits") {
    const Tensor p = softmax(Tensor::row_vector({0, 0, 0, 0}));
    for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("direct evaluation of (1,1,0,0)") {
    const Tensor p = softmax(Tensor::row_vector({1, 1, 0, 0}));
    CHECK(p[0] == doctest::Approx(0.3655293).epsilon(1e-6));
    CHECK(p[2] == doctest::Approx(0.1344707).epsilon(1e-6));
    const double sigma1 = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(p[0] + p[1] == doctest::Approx(sigma1).epsilon(1e-12));
  }
  SUBCASE("probability vector and shift invariance over random draws") {
    Rng rng(991);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t m = 1 + rng.uniform_index(8);
      std::vector<double> logits(m);
      for (double& v : logits) v = rng.uniform(-30.0, 30.0);
      const Tensor p = softmax(Tensor({m}, logits));
      double sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        CHECK(p[i] > 0.0);
        CHECK(p[i] < 1.0 + 1e-12);
        sum += p[i];
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-12);

      const double shift = rng.uniform(-50.0, 50.0);
      std::vector<double> shifted = logits;
      for (double& v : shifted) v += shift;
      const Tensor q = softmax(Tensor({m}, shifted));
      for (std::size_t i = 0; i < m; ++i) CHECK(std::fabs(p[i] - q[i]) <= 1e-12);
    }
  }
  SUBCASE("empty input throws") { CHECK_THROWS_AS(softmax(Tensor()), ShapeError); }
}

TEST_CASE("backward on analytic quadratic") {
  ParameterStore store;
  store.add("w", Tensor({2}, {1.0, -2.0}));
  Tape tape;
  const ValueId w = tape.param(store, "w");
  const ValueId loss = tape.sum_all(tape.mul(w, w));
  CHECK(tape.scalar(loss) == doctest::Approx(5.0));
  tape.backward(loss);
  CHECK(store.grad("w")[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(store.grad("w")[1] == doctest::Approx(-4.0).epsilon(1e-14));
}

TEST_CASE("backward gives zero for non-participating parameters") {
  ParameterStore store;
  store.add("used", Tensor({2}, {0.5, 0.25}));
  store.add("unused", Tensor({3}, {1.0, 2.0, 3.0}));
  Tape tape;
  const ValueId w = tape.param(store, "used");
  tape.param(store, "unused");
  tape.backward(tape.sum_all(tape.mul(w, w)));
  CHECK(store.grad("unused")[0] == 0.0);
  CHECK(store.grad("unused")[1] == 0.0);
  CHECK(store.grad("unused")[2] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  ParameterStore store;
  store.add("w", Tensor({2}, {1.0, -2.0}));
  Tape tape;
  const ValueId w = tape.param(store, "w");
  CHECK_THROWS_AS(tape.backward(tape.mul(w, w)), ContractError);
}

TEST_CASE("shared parameter accumulates gradients from every use") {
  // loss = sum(w*x1) + sum(w*x2); dw = x1 + x2.
  ParameterStore store;
  store.add("w", Tensor({1, 2}, {1.0, 1.0}));
  Tape tape;
  const ValueId w = tape.param(store, "w");
  const ValueId x1 = tape.constant(Tensor({1, 2}, {2.0, 3.0}));
  const ValueId x2 = tape.constant(Tensor({1, 2}, {10.0, -1.0}));
  const ValueId loss = tape.add(tape.sum_all(tape.mul(w, x1)), tape.sum_all(tape.mul(w, x2)));
  tape.backward(loss);
  CHECK(store.grad("w")[0] == doctest::Approx(12.0));
  CHECK(store.grad("w")[1] == doctest::Approx(2.0));
}

TEST_CASE("grad_check on quadratic is exact to roundoff") {
  ParameterStore store;
  store.add("w", Tensor({3}, {0.5, -1.5, 2.0}));
  const double err = grad_check(
      [](Tape& t, ParameterStore& s) {
        const ValueId w = t.param(s, "w");
        return t.sum_all(t.mul(w, w));
      },
      store);
  CHECK(err < 1e-10);
}

TEST_CASE("grad_check on GRU encoder + dense decoder composite") {
  const std::size_t in_dim = 3, hidden = 4, out_dim = 2, steps = 3, batch = 2;
  ParameterStore store;
  Rng rng(77);
  register_gru(store, "enc", in_dim, hidden, rng);
  register_dense(store, "dec", hidden, out_dim, rng);

  std::vector<Tensor> inputs;
  for (std::size_t s = 0; s < steps; ++s) {
    Tensor x({batch, in_dim});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    inputs.push_back(x);
  }
  Tensor target({batch, out_dim});
  for (std::size_t i = 0; i < target.numel(); ++i) target[i] = rng.uniform(-1.0, 1.0);

  const double err = grad_check(
      [&](Tape& t, ParameterStore& s) {
        ValueId h = t.constant(Tensor::zeros({batch, hidden}));
        for (const Tensor& x : inputs) h = gru_step_graph(t, s, "enc", h, t.constant(x));
        const ValueId y = dense_graph(t, s, "dec", h, Activation::tanh);
        const ValueId d = t.sub(t.constant(target), y);
        return t.scale(t.sum_all(t.mul(d, d)), 1.0 / static_cast<double>(batch));
      },
      store);
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check through softmax, gather, clamp and log") {
  ParameterStore store;
  Rng rng(123);
  register_dense(store, "head", 3, 4, rng);
  Tensor x({2, 3});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1.0, 1.0);

  const double err = grad_check(
      [&](Tape& t, ParameterStore& s) {
        const ValueId logits = dense_graph(t, s, "head", t.constant(x), Activation::identity);
        const ValueId probs = t.softmax_rows(logits);
        const ValueId picked = t.gather_cols(probs, {1, 3});
        const ValueId ll = t.log_op(t.clamp_min(picked, 1e-12));
        return t.scale(t.mean_all(ll), -1.0);
      },
      store);
  CHECK(err < 1e-6);
}

TEST_CASE("adam single step closed form") {
  ParameterStore store;
  store.add("theta", Tensor({1}, {0.0}));
  store.grad("theta")[0] = 0.5;
  adam_step(store, AdamConfig{});
  // First bias-corrected step moves by lr * g / (|g| + eps) = lr * (1 - 2e-8).
  CHECK(store.value("theta")[0] == doctest::Approx(-0.001 * (1.0 - 2e-8)).epsilon(1e-12));
  CHECK(store.entry("theta").adam.step == 1);
  CHECK(store.grad("theta")[0] == 0.0);
}

TEST_CASE("adam two steps match hand recurrence") {
  const double g = 0.3, lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ParameterStore store;
  store.add("theta", Tensor({1}, {1.0}));

  double m = 0.0, v = 0.0, x = 1.0;
  for (int t = 1; t <= 2; ++t) {
    store.grad("theta")[0] = g;
    adam_step(store, AdamConfig{lr, b1, b2, eps});
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    x -= lr * mh / (std::sqrt(vh) + eps);
    CHECK(store.value("theta")[0] == doctest::Approx(x).epsilon(1e-14));
  }
}

TEST_CASE("adam with zero gradient leaves values untouched") {
  ParameterStore store;
  store.add("theta", Tensor({2}, {0.7, -0.3}));
  // Build up nonzero moments first.
  store.grad("theta")[0] = 0.2;
  store.grad("theta")[1] = -0.1;
  adam_step(store, AdamConfig{});
  const double after_first0 = store.value("theta")[0];
  const double after_first1 = store.value("theta")[1];
  const double m0 = store.entry("theta").adam.first_moment[0];

  adam_step(store, AdamConfig{});  // gradients are zero now
  CHECK(store.value("theta")[0] == after_first0);
  CHECK(store.value("theta")[1] == after_first1);
  // Moments decayed.
  CHECK(store.entry("theta").adam.first_moment[0] == doctest::Approx(0.9 * m0).epsilon(1e-14));
}

TEST_CASE("adam rejects non-finite gradients with the parameter name") {
  ParameterStore store;
  store.add("theta", Tensor({1}, {0.0}));
  store.grad("theta")[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(adam_step(store, AdamConfig{}), "non-finite values in gradient of theta",
                       NumericError);
}

TEST_CASE("forward and backward are deterministic") {
  const auto run = [] {
    ParameterStore store;
    Rng rng(4242);
    register_gru(store, "enc", 2, 3, rng);
    register_dense(store, "dec", 3, 1, rng);
    Tape tape;
    ValueId h = tape.constant(Tensor::zeros({1, 3}));
    h = gru_step_graph(tape, store, "enc", h, tape.constant(Tensor({1, 2}, {0.4, -0.9})));
    const ValueId y = dense_graph(tape, store, "dec", h, Activation::tanh);
    const ValueId loss = tape.sum_all(tape.mul(y, y));
    tape.backward(loss);
    adam_step(store, AdamConfig{});
    return store;
  };
  const ParameterStore a = run();
  const ParameterStore b = run();
  CHECK(a.values_equal(b));
}
