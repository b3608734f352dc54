#pragma once

#include <cstdint>
#include <vector>

#include "fsolc/nn/tensor.hpp"

namespace fsolc::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  AdamState() = default;
  AdamState(AdamConfig cfg, const std::vector<Tensor>& params);
};

/// Bias-corrected ADAM update of `params` in place.
void adam_step(AdamState& state, std::vector<Tensor>& params,
               const std::vector<Tensor>& grads);

}  // namespace fsolc::nn
