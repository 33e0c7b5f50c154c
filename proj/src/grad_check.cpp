#include "usersim/grad_check.hpp"

#include <cmath>
#include <map>

namespace usersim::nn {

double grad_check(const LossBuilder& build, ParameterStore& store, double h) {
  if (h <= 0.0) throw ContractError("grad_check: h must be positive");

  store.zero_grads();
  {
    Tape tape;
    const ValueId loss = build(tape, store);
    if (tape.value(loss).numel() != 1) throw ContractError("grad_check: loss must be scalar");
    tape.backward(loss);
  }
  std::map<std::string, Tensor> analytic;
  for (const auto& [name, entry] : store) analytic.emplace(name, entry.grad);

  const auto eval = [&]() {
    Tape tape;
    return tape.scalar(build(tape, store));
  };

  double max_rel = 0.0;
  for (auto& [name, entry] : store) {
    Tensor& value = entry.value;
    const Tensor& a = analytic.at(name);
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double f_plus = eval();
      value[i] = saved - h;
      const double f_minus = eval();
      value[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double denom = std::max({1.0, std::fabs(a[i]), std::fabs(numeric)});
      max_rel = std::max(max_rel, std::fabs(a[i] - numeric) / denom);
    }
  }
  store.zero_grads();
  return max_rel;
}

}  // namespace usersim::nn
