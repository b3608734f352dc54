#pragma once

#include <compare>
#include <string>

namespace fsolc::compress {

/// Inclusive exponent window for both power-of-two terms. The default
/// [-30, 30] is what the serialized level format can hold.
struct ExponentRange {
  int min = -30;
  int max = 30;
  friend bool operator==(const ExponentRange&, const ExponentRange&) = default;
};

/// A quantization level of the form f*2^i + g*2^j with f, g in {-1, +1}.
/// When `single` is set the second term is absent and the level is f*2^i;
/// canonical single levels carry g = +1, j = 0.
struct Pow2Level {
  int f = 1;
  int i = 0;
  int g = 1;
  int j = 0;
  bool single = false;

  double value() const;
  Pow2Level negated() const;
  std::string to_string() const;

  friend bool operator==(const Pow2Level&, const Pow2Level&) = default;
};

/// Greedy two-term approximation: first the signed power of two nearest to x
/// (ties go to the smaller exponent), then the signed power of two nearest to
/// the remaining residual. An exactly representable single power of two is
/// returned as a one-term level. Magnitudes outside the exponent window are
/// clamped to the nearest representable value and reported via `clamped`.
/// Throws std::invalid_argument for x == 0 or non-finite x.
Pow2Level pow2_approx(double x, ExponentRange range = {}, bool* clamped = nullptr);

/// Closest two-term (or single-term) level to x, excluding values for which
/// `taken(value)` is true. Used to keep codebook levels distinct.
template <typename Pred>
Pow2Level nearest_free_pow2(double x, ExponentRange range, Pred taken);

/// Exponent k in the window minimising |2^k - a| for a > 0; ties go to the
/// smaller exponent.
int nearest_exponent(double a, ExponentRange range);

}  // namespace fsolc::compress

#include "fsolc/compress/pow2_impl.hpp"
