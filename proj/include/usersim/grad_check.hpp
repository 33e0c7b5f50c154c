#pragma once

#include <functional>

#include "usersim/tape.hpp"

namespace usersim::nn {

/// Builds a scalar loss on the given tape from the store's current values.
using LossBuilder = std::function<ValueId(Tape&, ParameterStore&)>;

/// Central-difference check of the tape's analytic gradients against the
/// loss builder. Returns the max over all parameter entries of
///   |analytic - numeric| / max(1, |analytic|, |numeric|).
/// The store's values are restored and its gradients cleared on return.
double grad_check(const LossBuilder& build, ParameterStore& store, double h = 1e-5);

}  // namespace usersim::nn
