#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fsolc/compress/codebook.hpp"
#include "fsolc/compress/quantized_model.hpp"
#include "fsolc/nn/adam.hpp"
#include "fsolc/nn/network.hpp"
#include "fsolc/nn/trainer.hpp"

namespace fsolc::compress {

/// How mu grows between epochs. kAsWritten is mu_{i+1} = mu_i * a^i,
/// kGeometric is mu_{i+1} = mu_i * a.
enum class MuSchedule { kAsWritten, kGeometric };

std::string to_string(MuSchedule s);
MuSchedule mu_schedule_from_string(const std::string& s);

struct LcConfig {
  int bits = 1;
  double a = 1.008;
  double mu0 = 1e-3;
  std::size_t epochs = 30;
  std::size_t epoch_size = 30000;
  std::size_t batch_size = 32;
  MuSchedule schedule = MuSchedule::kAsWritten;
  CodebookOptions codebook;

  void validate() const;
};

/// Penalty state over the quantizable tensors only; `params[k]` is the index
/// (into the network's parameter list) of the k-th quantized tensor.
struct LcState {
  double mu = 0.0;
  double a = 0.0;
  std::size_t epoch = 0;
  std::vector<std::size_t> params;
  std::vector<nn::Tensor> lambda;
  std::vector<nn::Tensor> w_hat;
};

struct LcEpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean data loss over the epoch
  double distance = 0.0;  // ||w - w_hat|| after this epoch's projection
  double mu = 0.0;        // penalty used during this epoch
  std::size_t pruned = 0;
  std::size_t quantized = 0;
};

/// mu * (w - w_hat - lambda / mu), elementwise.
nn::Tensor penalty_gradient(const nn::Tensor& w, const nn::Tensor& w_hat,
                            const nn::Tensor& lambda, double mu);

/// The penalised objective the loop works on. Implementations run one epoch
/// of minimising their data loss plus whatever the hook adds to the gradient.
class LcProblem {
 public:
  virtual ~LcProblem() = default;
  virtual std::vector<nn::Tensor>& params() = 0;
  virtual std::vector<bool> quantizable() const = 0;
  /// Returns the mean data loss of the epoch.
  virtual double train_epoch(const nn::GradientHook& penalty) = 0;
};

struct LcRun {
  LcState state;
  std::vector<LayerCodebook> codebooks;           // parallel to state.params
  std::vector<std::vector<std::uint32_t>> index;  // parallel to state.params
  std::vector<LcEpochRecord> trace;
};

/// Alternating learning-compression loop. Per epoch i:
///   1. minimise L(w) + mu_i/2 ||w - w_hat - lambda_i/mu_i||^2 for one epoch;
///   2. learn a codebook per quantizable tensor;
///   3. w_hat <- nearest levels to w - lambda_i/mu_i;
///   4. lambda_{i+1} <- lambda_i - mu_i (w - w_hat);
///   5. grow mu per the schedule.
/// Starts from w_hat = 0, lambda = 0. Throws nn::DivergenceError carrying the
/// epoch index when the loss becomes non-finite.
LcRun run_lc(LcProblem& problem, const LcConfig& config);

struct LcTrainResult {
  nn::Network net;  // final full-precision weights
  QuantizedModel model;
  std::vector<LcEpochRecord> trace;
};

/// run_lc on a network trained with ADAM on `data`. The network should
/// already minimise the data loss. With zero epochs the network is returned
/// unchanged and every weight of the model decodes to zero.
LcTrainResult lc_train(nn::Network net, nn::BatchSource& data, const LcConfig& config,
                       nn::AdamConfig adam = {});

/// One-shot baseline: learn each codebook from the trained weights and snap
/// the weights to it, without any retraining.
QuantizedModel post_train_compress(const nn::Network& net, int bits,
                                   const CodebookOptions& options = {});

/// 32 P / ((b + 1) P + 2^b * 17 L)
double compression_rate(std::size_t params, std::size_t layers, int bits);

}  // namespace fsolc::compress
