#include "usersim/optim.hpp"

#include <cmath>

namespace usersim::nn {

void ParameterStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  ParamEntry e;
  e.grad = Tensor::zeros(value.shape());
  e.adam.first_moment = Tensor::zeros(value.shape());
  e.adam.second_moment = Tensor::zeros(value.shape());
  e.value = std::move(value);
  entries_.emplace(name, std::move(e));
}

ParamEntry& ParameterStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const ParamEntry& ParameterStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

void ParameterStore::zero_grads() {
  for (auto& [name, e] : entries_) e.grad.zero();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.numel();
  return n;
}

bool ParameterStore::values_equal(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto it = entries_.begin();
  auto jt = other.entries_.begin();
  for (; it != entries_.end(); ++it, ++jt) {
    if (it->first != jt->first) return false;
    if (it->second.value.shape() != jt->second.value.shape()) return false;
    if (it->second.value.raw() != jt->second.value.raw()) return false;
  }
  return true;
}

void adam_step(ParameterStore& store, const AdamConfig& config) {
  if (config.lr <= 0.0) throw ContractError("adam_step: lr must be positive");
  for (auto& [name, e] : store) {
    e.grad.require_finite("gradient of " + name);
    e.adam.step += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(e.adam.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(e.adam.step));
    double* p = e.value.data();
    double* g = e.grad.data();
    double* m = e.adam.first_moment.data();
    double* v = e.adam.second_moment.data();
    const std::size_t n = e.value.numel();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      if (g[i] != 0.0) {
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
      }
    }
    e.grad.zero();
  }
}

}  // namespace usersim::nn
