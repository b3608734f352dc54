#pragma once

#include <random>
#include <vector>

namespace fsolc::channel {

/// Gamma-Gamma turbulence parameters. alpha relates to the small-scale
/// eddies, beta to the large-scale ones.
struct TurbulenceParams {
  double alpha = 4.0;
  double beta = 1.9;

  /// From the Rytov variance under plane-wave propagation.
  static TurbulenceParams from_rytov(double rytov_var);
  /// Throws std::invalid_argument unless both are finite and positive.
  void validate() const;
};

/// Rytov variance 1.23 Cn2 k^{7/6} z^{11/6}, k = 2 pi / wavelength (SI units).
double rytov_variance(double cn2, double wavelength, double distance);

/// Throws std::invalid_argument for rytov_var <= 0 or non-finite.
TurbulenceParams alpha_beta_from_rytov(double rytov_var);

/// 1/alpha + 1/beta + 1/(alpha beta)
double scintillation_index(const TurbulenceParams& p);

/// Unit-mean Gamma-Gamma density of the intensity I > 0; throws
/// std::domain_error for I <= 0.
double gg_pdf(double intensity, const TurbulenceParams& p);
double log_gg_pdf(double intensity, const TurbulenceParams& p);

/// P(I <= intensity) by adaptive Gauss-Kronrod quadrature; 0 for I <= 0.
double gg_cdf(double intensity, const TurbulenceParams& p);

/// One intensity per antenna, each the product of independent unit-mean
/// Gamma(alpha) and Gamma(beta) variates.
std::vector<double> sample_channel(const TurbulenceParams& p, std::size_t antennas,
                                   std::mt19937_64& rng);

}  // namespace fsolc::channel
