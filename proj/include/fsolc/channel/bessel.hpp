#pragma once

namespace fsolc::channel {

/// Modified Bessel function of the second kind K_nu(x) for real nu and
/// x > 0 (K_{-nu} = K_nu). Temme's series for x < 2, Steed's continued
/// fraction otherwise, then forward recurrence in the order.
double bessel_k(double nu, double x);

/// log K_nu(x), valid where K_nu(x) itself would over- or underflow.
double log_bessel_k(double nu, double x);

}  // namespace fsolc::channel
