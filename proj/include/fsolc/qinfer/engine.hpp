#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fsolc/compress/quantized_model.hpp"
#include "fsolc/nn/tensor.hpp"

namespace fsolc::qinfer {

/// x * 2^k by adjusting the exponent field. Falls back to ldexp for zero,
/// subnormal, non-finite or out-of-range results, so it is always exact
/// whenever the true result is representable.
inline double shift(double x, int k) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  if ((bits << 1) == 0) return x;  // signed zero
  const auto e = static_cast<int>((bits >> 52) & 0x7ff);
  if (e == 0 || e == 0x7ff || e + k <= 0 || e + k >= 0x7ff) return std::ldexp(x, k);
  return std::bit_cast<double>(bits + (static_cast<std::uint64_t>(static_cast<std::int64_t>(k)) << 52));
}

/// Multiplication by one pow2 level: sign flips, one or two shifts and at
/// most one addition.
struct ShiftAddOp {
  bool neg1 = false;
  int k1 = 0;
  bool two_terms = false;
  bool neg2 = false;
  int k2 = 0;

  static ShiftAddOp from_level(const compress::Pow2Level& level);

  /// Reference form, one term at a time.
  double apply_reference(double x) const {
    const double t1 = shift(neg1 ? -x : x, k1);
    if (!two_terms) return t1;
    return t1 + shift(neg2 ? -x : x, k2);
  }

  /// Same result without data-dependent branches for normal operands: the
  /// sign flip is an xor, the shift an add on the exponent field, and an
  /// absent second term is masked to +0.
  double apply(double x) const {
    const auto b = std::bit_cast<std::uint64_t>(x);
    const std::uint64_t nonzero = 0 - static_cast<std::uint64_t>((b << 1) != 0);
    // Zero is given an in-range exponent so the only branch stays predictable.
    const std::uint64_t e = ((b >> 52) & 0x7ff) | (~nonzero & safe_lo_);
    if (e - safe_lo_ > safe_span_) return apply_reference(x);
    const double t1 = std::bit_cast<double>(((b ^ sign1_) + step1_) & nonzero);
    const double t2 = std::bit_cast<double>(((b ^ sign2_) + step2_) & nonzero & keep2_);
    return t1 + t2;
  }
  int shifts() const { return two_terms ? 2 : 1; }
  int adds() const { return two_terms ? 1 : 0; }

 private:
  std::uint64_t sign1_ = 0, sign2_ = 0, step1_ = 0, step2_ = 0, keep2_ = 0;
  std::uint64_t safe_lo_ = 1, safe_span_ = 2045;
};

/// Operation tally for one parametrised layer. `products` are the weight x
/// activation products actually executed; `pruned` the ones skipped because
/// the weight sits on the zero level. Term adds combine the two shifted
/// terms of a level; accumulate adds sum products and the bias.
struct LayerOps {
  std::size_t layer = 0;
  std::string name;
  bool quantized = true;
  std::uint64_t products = 0;
  std::uint64_t pruned = 0;
  std::uint64_t shifts = 0;
  std::uint64_t term_adds = 0;
  std::uint64_t accumulate_adds = 0;
  std::uint64_t multiplies = 0;

  LayerOps& operator+=(const LayerOps& o);
};

struct OpCounter {
  std::vector<LayerOps> layers;  // one row per conv/dense layer, in order

  bool empty() const;
  LayerOps total() const;
  /// Adds another counter's rows (same model) into this one.
  void merge(const OpCounter& other);
};

/// Executes a QuantizedModel. Quantized kernels multiply through their
/// levels' ShiftAddOps, pruned weights are skipped, unquantized kernels use
/// ordinary multiplies (and count them).
class Engine {
 public:
  explicit Engine(compress::QuantizedModel model);

  /// batch {B, input_shape...} -> {B, outputs}
  nn::Tensor forward(const nn::Tensor& batch, OpCounter* counter = nullptr) const;
  OpCounter make_counter() const;
  const compress::QuantizedModel& model() const { return model_; }

  static constexpr std::int32_t kRawMultiply = -1;
  struct Tap {
    std::uint32_t ky = 0, kx = 0, c = 0;  // dense layers use c as the input index
    std::int32_t op = kRawMultiply;       // level index into ops
    double raw = 0.0;                     // weight value for kRawMultiply
  };
  struct Layer {
    nn::LayerSpec spec;
    std::size_t layer = 0;
    std::size_t in_h = 1, in_w = 1, in_c = 1;
    bool quantized = false;
    std::vector<ShiftAddOp> ops;         // per codebook level
    std::vector<std::vector<Tap>> taps;         // per filter / unit, executed
    std::vector<std::vector<Tap>> pruned_taps;  // per filter / unit, skipped
    std::vector<double> bias;
    std::size_t row = 0;  // index into OpCounter::layers
  };

 private:
  compress::QuantizedModel model_;
  std::vector<Layer> layers_;
};

nn::Tensor qforward(const compress::QuantizedModel& model, const nn::Tensor& batch,
                    OpCounter& counter);

struct CostRow {
  LayerOps ops;
  std::uint64_t fp_shifts = 0;  // reference_bits shifts per multiplication
  std::uint64_t fp_adds = 0;    // (reference_bits - 1) adds per multiplication
  // fp shifts of the executed products / shifts; and the same counting the
  // pruned products as saved too. Zero when no shift was executed.
  double shift_ratio = 0.0;
  double model_shift_ratio = 0.0;
};

struct CostReport {
  int reference_bits = 32;
  std::vector<CostRow> rows;
  CostRow total;
  /// Ratio under the bound of two shifts per replaced multiplication.
  double nominal_shift_ratio = 0.0;
};

/// Compares the counted operations with a full-precision model in which
/// every multiplication costs `reference_bits` shifts and reference_bits-1
/// adds. Throws std::invalid_argument on an empty counter.
CostReport count_report(const OpCounter& counter, const compress::QuantizedModel& model,
                        int reference_bits = 32);

nlohmann::json to_json(const CostReport& report);

}  // namespace fsolc::qinfer
