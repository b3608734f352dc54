#include "fsolc/rx/receivers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fsolc::rx {

void CsiErrorModel::validate() const {
  if (!(error_std >= 0.0) || !std::isfinite(error_std)) {
    throw std::invalid_argument("CSI error std must be finite and non-negative");
  }
}

std::vector<double> corrupt_csi(std::span<const double> h, const CsiErrorModel& model,
                                std::mt19937_64& rng) {
  model.validate();
  std::vector<double> est(h.begin(), h.end());
  if (model.error_std == 0.0) return est;
  std::normal_distribution<double> err(0.0, model.error_std);
  for (auto& v : est) v = std::max(v * (1.0 + err(rng)), 1e-6 * v);
  return est;
}

std::vector<std::uint8_t> detect_ml_siso(std::span<const double> y, double h_est) {
  const double threshold = 0.5 * h_est;
  std::vector<std::uint8_t> bits(y.size());
  for (std::size_t l = 0; l < y.size(); ++l) bits[l] = y[l] > threshold;
  return bits;
}

std::vector<std::uint8_t> detect_ml_simo(std::span<const double> y, std::span<const double> h_est,
                                         std::size_t block_len) {
  if (h_est.empty() || y.size() != h_est.size() * block_len) {
    throw nn::ShapeError("detect_ml_simo: observation is not M x L");
  }
  double norm2 = 0.0;
  for (double v : h_est) norm2 += v * v;
  const double threshold = 0.5 * norm2;
  std::vector<double> stat(block_len, 0.0);
  for (std::size_t m = 0; m < h_est.size(); ++m) {
    for (std::size_t l = 0; l < block_len; ++l) stat[l] += h_est[m] * y[m * block_len + l];
  }
  std::vector<std::uint8_t> bits(block_len);
  for (std::size_t l = 0; l < block_len; ++l) bits[l] = stat[l] > threshold;
  return bits;
}

std::vector<std::uint8_t> decide(const nn::Tensor& probabilities) {
  std::vector<std::uint8_t> bits(probabilities.size());
  for (std::size_t k = 0; k < bits.size(); ++k) bits[k] = probabilities[k] >= 0.5;
  return bits;
}

std::vector<std::uint8_t> detect_cnn(const nn::Network& net, const nn::Tensor& inputs) {
  return decide(nn::forward(net, inputs));
}

CnnReceiver::CnnReceiver(std::string tag, nn::Network net)
    : tag_(std::move(tag)), net_(std::move(net)) {}

CnnReceiver::CnnReceiver(std::string tag, const compress::QuantizedModel& model, bool shift_add)
    : tag_(std::move(tag)) {
  if (shift_add) {
    engine_ = std::make_shared<const qinfer::Engine>(model);
  } else {
    net_ = model.to_network();
  }
}

std::vector<std::uint8_t> CnnReceiver::detect(const channel::LinkConfig& cfg,
                                              const std::vector<channel::LinkSample>& blocks) const {
  // Bounded batches keep the im2col buffers small for the SIMO network.
  constexpr std::size_t kChunk = 256;
  std::vector<std::uint8_t> bits;
  bits.reserve(blocks.size() * cfg.block_len);
  for (std::size_t start = 0; start < blocks.size(); start += kChunk) {
    const std::vector<channel::LinkSample> part(
        blocks.begin() + start, blocks.begin() + std::min(blocks.size(), start + kChunk));
    const auto batch = channel::make_batch(cfg, part);
    const auto probs = engine_ ? engine_->forward(batch.inputs) : nn::forward(net_, batch.inputs);
    if (probs.size() != part.size() * cfg.block_len) {
      throw nn::ShapeError("receiver " + tag_ + ": network output does not have L bits per block");
    }
    const auto d = decide(probs);
    bits.insert(bits.end(), d.begin(), d.end());
  }
  return bits;
}

std::uint64_t csi_seed(std::uint64_t block_seed) {
  return channel::mix_seed(block_seed ^ 0xc5105eedULL);
}

MlReceiver::MlReceiver(std::optional<CsiErrorModel> csi_error)
    : MlReceiver(csi_error ? "ml_imperfect_csi" : "ml_perfect_csi", csi_error) {}

MlReceiver::MlReceiver(std::string tag, std::optional<CsiErrorModel> csi_error)
    : tag_(std::move(tag)), csi_error_(csi_error) {
  if (csi_error_) csi_error_->validate();
}

std::vector<double> MlReceiver::channel_estimate(const channel::LinkSample& block) const {
  if (!csi_error_) return block.h;
  std::mt19937_64 rng(csi_seed(block.seed));
  return corrupt_csi(block.h, *csi_error_, rng);
}

std::vector<std::uint8_t> MlReceiver::detect(const channel::LinkConfig& cfg,
                                             const std::vector<channel::LinkSample>& blocks) const {
  std::vector<std::uint8_t> bits;
  bits.reserve(blocks.size() * cfg.block_len);
  for (const auto& b : blocks) {
    const auto h = channel_estimate(b);
    const auto d = cfg.system == channel::System::kSiso && h.size() == 1
                       ? detect_ml_siso(b.x, h[0])
                       : detect_ml_simo(b.x, h, cfg.block_len);
    if (d.size() != cfg.block_len) throw nn::ShapeError("receiver " + tag_ + ": block length mismatch");
    bits.insert(bits.end(), d.begin(), d.end());
  }
  return bits;
}

}  // namespace fsolc::rx
