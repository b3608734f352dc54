#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fsolc/channel/link.hpp"
#include "fsolc/compress/quantized_model.hpp"
#include "fsolc/nn/network.hpp"
#include "fsolc/qinfer/engine.hpp"

namespace fsolc::rx {

/// Relative multiplicative channel-estimation error: h_est = h (1 + e),
/// e ~ N(0, error_std^2), redrawn per coherence block.
struct CsiErrorModel {
  double error_std = 0.2;
  void validate() const;
};

/// Estimates below 1e-6 h are clamped to 1e-6 h.
std::vector<double> corrupt_csi(std::span<const double> h, const CsiErrorModel& model,
                                std::mt19937_64& rng);

/// Decides 1 iff y > h_est / 2.
std::vector<std::uint8_t> detect_ml_siso(std::span<const double> y, double h_est);
/// Y is M x L row-major. Decides 1 iff h_est . y_l > |h_est|^2 / 2 per column.
std::vector<std::uint8_t> detect_ml_simo(std::span<const double> y, std::span<const double> h_est,
                                         std::size_t block_len);

/// Bit decisions from sigmoid outputs {B, L}: 1 iff p >= 0.5.
std::vector<std::uint8_t> decide(const nn::Tensor& probabilities);
/// Runs the network on `inputs` {B, input_shape...}. Uses no CSI.
std::vector<std::uint8_t> detect_cnn(const nn::Network& net, const nn::Tensor& inputs);

/// A detector under comparison. detect() returns L bits per block,
/// concatenated in block order. Implementations are stateless, so one
/// instance may be shared across threads.
class Receiver {
 public:
  virtual ~Receiver() = default;
  virtual const std::string& tag() const = 0;
  virtual std::vector<std::uint8_t> detect(const channel::LinkConfig& cfg,
                                           const std::vector<channel::LinkSample>& blocks) const = 0;
};

/// CNN receiver over a full-precision or decoded compressed network, or,
/// with `shift_add`, over the shift-add engine of a QuantizedModel.
class CnnReceiver : public Receiver {
 public:
  CnnReceiver(std::string tag, nn::Network net);
  CnnReceiver(std::string tag, const compress::QuantizedModel& model, bool shift_add = false);

  const std::string& tag() const override { return tag_; }
  std::vector<std::uint8_t> detect(const channel::LinkConfig& cfg,
                                   const std::vector<channel::LinkSample>& blocks) const override;

 private:
  std::string tag_;
  nn::Network net_;
  std::shared_ptr<const qinfer::Engine> engine_;
};

/// ML receiver. Without an error model it uses the true channel. With one,
/// the estimate for a block is drawn from a generator seeded by the block's
/// seed, so every receiver sharing the model sees the same estimate.
class MlReceiver : public Receiver {
 public:
  explicit MlReceiver(std::optional<CsiErrorModel> csi_error = std::nullopt);
  MlReceiver(std::string tag, std::optional<CsiErrorModel> csi_error);

  const std::string& tag() const override { return tag_; }
  std::vector<std::uint8_t> detect(const channel::LinkConfig& cfg,
                                   const std::vector<channel::LinkSample>& blocks) const override;
  /// The estimate the receiver uses for `block`.
  std::vector<double> channel_estimate(const channel::LinkSample& block) const;

 private:
  std::string tag_;
  std::optional<CsiErrorModel> csi_error_;
};

/// Seed of the CSI-error generator for a block.
std::uint64_t csi_seed(std::uint64_t block_seed);

}  // namespace fsolc::rx
