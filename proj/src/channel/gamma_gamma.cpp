#include "fsolc/channel/gamma_gamma.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "fsolc/channel/bessel.hpp"

namespace fsolc::channel {

TurbulenceParams TurbulenceParams::from_rytov(double rytov_var) {
  return alpha_beta_from_rytov(rytov_var);
}

void TurbulenceParams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha) || !(beta > 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("turbulence parameters must be finite and positive (alpha=" +
                                std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
  }
}

double rytov_variance(double cn2, double wavelength, double distance) {
  if (!(cn2 > 0.0) || !(wavelength > 0.0) || !(distance > 0.0)) {
    throw std::invalid_argument("rytov_variance: Cn2, wavelength and distance must be positive");
  }
  const double k = 2.0 * std::numbers::pi / wavelength;
  return 1.23 * cn2 * std::pow(k, 7.0 / 6.0) * std::pow(distance, 11.0 / 6.0);
}

TurbulenceParams alpha_beta_from_rytov(double rytov_var) {
  if (!(rytov_var > 0.0) || !std::isfinite(rytov_var)) {
    throw std::invalid_argument("alpha_beta_from_rytov: Rytov variance must be positive, got " +
                                std::to_string(rytov_var));
  }
  // sigma^{12/5} with sigma^2 = rytov_var
  const double s125 = std::pow(rytov_var, 6.0 / 5.0);
  const double ea = 0.49 * rytov_var / std::pow(1.0 + 1.11 * s125, 7.0 / 6.0);
  const double eb = 0.51 * rytov_var / std::pow(1.0 + 0.69 * s125, 5.0 / 6.0);
  // expm1 keeps the weak-turbulence limit accurate
  return {1.0 / std::expm1(ea), 1.0 / std::expm1(eb)};
}

double scintillation_index(const TurbulenceParams& p) {
  p.validate();
  return 1.0 / p.alpha + 1.0 / p.beta + 1.0 / (p.alpha * p.beta);
}

double log_gg_pdf(double intensity, const TurbulenceParams& p) {
  p.validate();
  if (!(intensity > 0.0) || !std::isfinite(intensity)) {
    throw std::domain_error("gg_pdf: intensity must be positive, got " + std::to_string(intensity));
  }
  const double a = p.alpha, b = p.beta;
  const double half = 0.5 * (a + b);
  return std::log(2.0) + half * std::log(a * b) - std::lgamma(a) - std::lgamma(b) +
         (half - 1.0) * std::log(intensity) +
         log_bessel_k(a - b, 2.0 * std::sqrt(a * b * intensity));
}

double gg_pdf(double intensity, const TurbulenceParams& p) {
  return std::exp(log_gg_pdf(intensity, p));
}

double gg_cdf(double intensity, const TurbulenceParams& p) {
  p.validate();
  if (std::isnan(intensity)) throw std::domain_error("gg_cdf: NaN intensity");
  if (intensity <= 0.0) return 0.0;
  if (intensity == std::numeric_limits<double>::infinity()) return 1.0;
  using boost::math::quadrature::gauss_kronrod;
  const auto f = [&p](double t) { return t > 0.0 ? gg_pdf(t, p) : 0.0; };
  // Integrate whichever side of the mean is the smaller tail.
  if (intensity > 1.0) {
    return 1.0 - gauss_kronrod<double, 31>::integrate(
                     f, intensity, std::numeric_limits<double>::infinity(), 15, 1e-13);
  }
  // Near zero f(t) ~ t^(m-1), m = min(alpha, beta). With t = I v^n and
  // n = 1/m that becomes bounded, so no singular endpoint for m < 1.
  const double n = std::max(1.0, 1.0 / std::min(p.alpha, p.beta));
  const auto g = [&](double v) {
    if (v <= 0.0) return 0.0;
    const double vn1 = std::pow(v, n - 1.0);
    return f(intensity * vn1 * v) * intensity * n * vn1;
  };
  return gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, 15, 1e-13);
}

std::vector<double> sample_channel(const TurbulenceParams& p, std::size_t antennas,
                                   std::mt19937_64& rng) {
  p.validate();
  if (antennas == 0) throw std::invalid_argument("sample_channel: need at least one antenna");
  std::gamma_distribution<double> gx(p.alpha, 1.0 / p.alpha);
  std::gamma_distribution<double> gy(p.beta, 1.0 / p.beta);
  std::vector<double> h(antennas);
  for (auto& v : h) {
    const double x = gx(rng);
    // a gamma draw can underflow to zero for tiny shapes; keep h > 0
    v = std::max(x * gy(rng), std::numeric_limits<double>::min());
  }
  return h;
}

}  // namespace fsolc::channel
