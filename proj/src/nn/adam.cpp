#include "fsolc/nn/adam.hpp"

#include <cmath>

namespace fsolc::nn {

AdamState::AdamState(AdamConfig cfg, const std::vector<Tensor>& params)
    : config(cfg) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const auto& p : params) {
    first_moment.emplace_back(p.shape());
    second_moment.emplace_back(p.shape());
  }
}

void adam_step(AdamState& state, std::vector<Tensor>& params,
               const std::vector<Tensor>& grads) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) +
                     " parameters, " + std::to_string(grads.size()) +
                     " gradients, " + std::to_string(state.first_moment.size()) +
                     " moment tensors");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].shape() != params[p].shape() ||
        state.first_moment[p].shape() != params[p].shape()) {
      throw ShapeError("adam_step: tensor " + std::to_string(p) + " parameter " +
                       shape_to_string(params[p].shape()) + ", gradient " +
                       shape_to_string(grads[p].shape()));
    }
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    double* w = params[p].data();
    const double* g = grads[p].data();
    double* m = state.first_moment[p].data();
    double* v = state.second_moment[p].data();
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace fsolc::nn
