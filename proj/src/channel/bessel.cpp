#include "fsolc/channel/bessel.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fsolc::channel {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxIter = 10000;

// Taylor coefficients of 1/Gamma(z) = sum c_k z^k (c_1 = 1, c_2 = Euler's
// gamma); entries are c_3 .. c_20, enough for |z| <= 1/2 to full precision.
constexpr double kRecipGamma[] = {
    -0.65587807152025388,   -0.042002635034095236, 0.16653861138229149,   -0.042197734555544337,
    -0.0096219715278769736, 0.0072189432466630995, -0.0011651675918590651, -0.00021524167411495097,
    0.00012805028238811619, -2.0134854780788239e-5, -1.2504934821426707e-6, 1.1330272319816959e-6,
    -2.0563384169776071e-7, 6.1160951044814158e-9,  5.0020076444692229e-9,  -1.1812745704870201e-9,
    1.0434267116911005e-10, 7.7822634399050713e-12};

// gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu), gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2,
// plus the two reciprocals themselves.
struct TemmeGammas {
  double gam1, gam2, gampl, gammi;
};

TemmeGammas temme_gammas(double mu) {
  // 1/G(1+z) = 1 + gamma z + c_3 z^2 + c_4 z^3 + ...: the odd part gives
  // gam1 and the even part gam2, without the cancellation of differencing.
  const double m2 = mu * mu;
  double odd = 0.0, even = 0.0;
  for (int k = 8; k >= 0; --k) {
    even = even * m2 + kRecipGamma[2 * k];
    odd = odd * m2 + kRecipGamma[2 * k + 1];
  }
  TemmeGammas g{};
  g.gam1 = -(std::numbers::egamma + odd * m2);
  g.gam2 = 1.0 + even * m2;
  g.gampl = g.gam2 - mu * g.gam1;
  g.gammi = g.gam2 + mu * g.gam1;
  return g;
}

void check_args(double nu, double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::domain_error("bessel_k: x must be positive and finite, got " + std::to_string(x));
  }
  if (!std::isfinite(nu)) throw std::domain_error("bessel_k: order must be finite");
}

// K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2, with K scaled by exp(x) when
// `scaled` (x >= 2 path returns scaled values natively).
void k_mu_pair(double mu, double x, double& kmu, double& kmu1, bool& scaled) {
  const double xi = 1.0 / x;
  const double xi2 = 2.0 * xi;
  if (x < 2.0) {
    scaled = false;
    const double x2 = 0.5 * x;
    const double pimu = std::numbers::pi * mu;
    const double fact = std::abs(pimu) < kEps ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(x2);
    double e = mu * d;
    const double fact2 = std::abs(e) < kEps ? 1.0 : std::sinh(e) / e;
    const TemmeGammas g = temme_gammas(mu);
    double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / g.gampl;
    double q = 0.5 / (e * g.gammi);
    double c = 1.0;
    d = x2 * x2;
    double sum1 = p;
    int i = 1;
    for (; i <= kMaxIter; ++i) {
      ff = (i * ff + p + q) / (i * i - mu * mu);
      c *= d / i;
      p /= i - mu;
      q /= i + mu;
      const double del = c * ff;
      sum += del;
      sum1 += c * (p - i * ff);
      if (std::abs(del) < std::abs(sum) * kEps) break;
    }
    if (i > kMaxIter) throw std::runtime_error("bessel_k: series failed to converge");
    kmu = sum;
    kmu1 = sum1 * xi2;
    return;
  }
  scaled = true;
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d, delh = d;
  double q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25 - mu * mu;
  double q = a1, c = a1, a = -a1;
  double s = 1.0 + q * delh;
  int i = 2;
  for (; i <= kMaxIter; ++i) {
    a -= 2 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < kEps) break;
  }
  if (i > kMaxIter) throw std::runtime_error("bessel_k: continued fraction failed to converge");
  h = a1 * h;
  kmu = std::sqrt(std::numbers::pi / (2.0 * x)) / s;
  kmu1 = kmu * (mu + x + 0.5 - h) * xi;
}

// log K_nu(x): recurrence from K_mu, K_{mu+1} with renormalisation.
double log_k_impl(double nu, double x) {
  nu = std::abs(nu);
  const int nl = static_cast<int>(nu + 0.5);
  const double mu = nu - nl;
  double kmu = 0.0, kmu1 = 0.0;
  bool scaled = false;
  k_mu_pair(mu, x, kmu, kmu1, scaled);
  double log_scale = scaled ? -x : 0.0;
  const double xi2 = 2.0 / x;
  for (int i = 1; i <= nl; ++i) {
    const double next = (mu + i) * xi2 * kmu1 + kmu;
    kmu = kmu1;
    kmu1 = next;
    if (kmu1 > 1e250) {
      kmu *= 1e-250;
      kmu1 *= 1e-250;
      log_scale += 250.0 * std::numbers::ln10;
    }
  }
  return std::log(kmu) + log_scale;
}

}  // namespace

double log_bessel_k(double nu, double x) {
  check_args(nu, x);
  return log_k_impl(nu, x);
}

double bessel_k(double nu, double x) {
  check_args(nu, x);
  return std::exp(log_k_impl(nu, x));
}

}  // namespace fsolc::channel
