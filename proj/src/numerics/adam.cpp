#include "delip/numerics/adam.hpp"

#include <cmath>

#include "delip/numerics/errors.hpp"

namespace delip {

AdamState make_adam_state(const ParameterStore& store, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const Parameter* p : store.all()) {
    s.first_moment.emplace_back(p->value.rows(), p->value.cols());
    s.second_moment.emplace_back(p->value.rows(), p->value.cols());
  }
  return s;
}

void adam_step(ParameterStore& store, AdamState& state) {
  auto params = store.all();
  if (params.size() != state.first_moment.size()) throw ContractError("adam: state does not match store");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = *params[k];
    if (!p.grad.same_shape(p.value) || !state.first_moment[k].same_shape(p.value)) {
      throw ContractError("adam: shape mismatch for " + p.name);
    }
    if (!p.frozen && !p.grad.all_finite()) throw NumericError("adam: non-finite gradient for " + p.name);
  }

  state.step_count += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (p.frozen) continue;
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : store.all()) {
    if (p->frozen) continue;
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : store.all()) {
      if (p->frozen) continue;
      for (double& g : p->grad.values()) g *= s;
    }
  }
  return norm;
}

}  // namespace delip
