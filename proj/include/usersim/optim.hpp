#pragma once

#include <map>
#include <string>

#include "usersim/tensor.hpp"

namespace usersim::nn {

/// Per-parameter Adam accumulators. Moment shapes mirror the parameter.
struct AdamState {
  Tensor first_moment;
  Tensor second_moment;
  long step = 0;
};

struct ParamEntry {
  Tensor value;
  Tensor grad;
  AdamState adam;
};

/// Named parameter collection: value + gradient accumulator + Adam state per
/// entry. Iteration order is the sorted name order (std::map), which fixes
/// the update and serialization order for determinism.
class ParameterStore {
 public:
  /// Registers a parameter; gradient and moments start at zero.
  void add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }

  ParamEntry& entry(const std::string& name);
  const ParamEntry& entry(const std::string& name) const;
  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }

  void zero_grads();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Total number of scalar parameter entries.
  std::size_t scalar_count() const;

  bool values_equal(const ParameterStore& other) const;

 private:
  std::map<std::string, ParamEntry> entries_;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update over every entry, then gradients are cleared
/// and the step counter advances. Entries whose gradient is exactly zero
/// keep their value (moments still decay), so parameters that never
/// participate in a loss cannot drift.
void adam_step(ParameterStore& store, const AdamConfig& config);

}  // namespace usersim::nn
