#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsolc/nn/adam.hpp"
#include "fsolc/nn/network.hpp"

namespace fsolc::nn {

struct Batch {
  Tensor inputs;   // {B, input_shape...}
  Tensor targets;  // {B, output...}
};

/// Endless supplier of training batches.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual Batch next(std::size_t batch_size) = 0;
};

/// Optional extra gradient added to the loss gradient on every step, computed
/// from the current parameters. Returning an empty vector means "none".
using GradientHook =
    std::function<std::vector<Tensor>(const std::vector<Tensor>& params)>;

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t samples = 0;
  std::size_t steps = 0;
};

/// One pass of `epoch_size` samples in mini-batches of `batch_size` (the last
/// batch may be short). Throws DivergenceError if a loss turns non-finite.
EpochStats train_epoch(Network& net, AdamState& adam, BatchSource& source,
                       std::size_t epoch_size, std::size_t batch_size,
                       const GradientHook& extra = {});

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what, long epoch = -1)
      : std::runtime_error(what), epoch_(epoch) {}
  long epoch() const { return epoch_; }

 private:
  long epoch_;
};

}  // namespace fsolc::nn
