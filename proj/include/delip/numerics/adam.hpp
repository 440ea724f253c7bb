#pragma once

#include <cstdint>
#include <vector>

#include "delip/numerics/parameters.hpp"

namespace delip {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step_count = 0;
  std::vector<Tensor> first_moment;   // one per parameter, store order
  std::vector<Tensor> second_moment;
};

AdamState make_adam_state(const ParameterStore& store, AdamConfig config);

/// Bias-corrected Adam update using each parameter's `grad` slot. Frozen
/// parameters are left untouched (their moments stay zero).
/// Throws ContractError on shape mismatch and NumericError on a non-finite gradient.
void adam_step(ParameterStore& store, AdamState& state);

// Scales all non-frozen gradients so their joint L2 norm is at most max_norm.
// Returns the norm before scaling.
double clip_grad_norm(ParameterStore& store, double max_norm);

}  // namespace delip
