#pragma once

#include <random>
#include <vector>

#include "fsolc/nn/network.hpp"

namespace fsolc::testing {

inline nn::Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng,
                                double lo = -1.0, double hi = 1.0) {
  nn::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.values()) v = d(rng);
  return t;
}

inline nn::Tensor random_bits(nn::Shape shape, std::mt19937_64& rng) {
  nn::Tensor t(std::move(shape));
  std::bernoulli_distribution d(0.5);
  for (double& v : t.values()) v = d(rng) ? 1.0 : 0.0;
  return t;
}

inline nn::Shape batched(std::size_t b, const nn::Shape& per) {
  nn::Shape s{b};
  s.insert(s.end(), per.begin(), per.end());
  return s;
}

inline void randomize(nn::Network& net, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> d(0.0, scale);
  for (auto& p : net.params())
    for (double& v : p.values()) v = d(rng);
}

}  // namespace fsolc::testing
