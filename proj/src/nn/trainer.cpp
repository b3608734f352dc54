#include "fsolc/nn/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace fsolc::nn {

EpochStats train_epoch(Network& net, AdamState& adam, BatchSource& source,
                       std::size_t epoch_size, std::size_t batch_size,
                       const GradientHook& extra) {
  if (batch_size == 0) throw std::invalid_argument("train_epoch: batch_size is 0");
  EpochStats stats;
  double loss_sum = 0.0;
  while (stats.samples < epoch_size) {
    const std::size_t n = std::min(batch_size, epoch_size - stats.samples);
    Batch batch = source.next(n);
    if (batch.inputs.rank() == 0 || batch.inputs.dim(0) == 0) {
      throw std::invalid_argument("train_epoch: data source returned an empty batch");
    }
    std::vector<Tensor> penalty;
    if (extra) penalty = extra(net.params());
    LossAndGradients lg = backward(net, batch.inputs, batch.targets,
                                   penalty.empty() ? nullptr : &penalty);
    if (!std::isfinite(lg.loss)) {
      throw DivergenceError("training loss became non-finite at step " +
                            std::to_string(stats.steps));
    }
    adam_step(adam, net.params(), lg.grads);
    loss_sum += lg.loss * static_cast<double>(n);
    stats.samples += n;
    ++stats.steps;
  }
  stats.mean_loss = stats.samples ? loss_sum / static_cast<double>(stats.samples) : 0.0;
  return stats;
}

}  // namespace fsolc::nn
