#include "fsolc/compress/pow2.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fsolc::compress {

double Pow2Level::value() const {
  const double first = f * std::ldexp(1.0, i);
  return single ? first : first + g * std::ldexp(1.0, j);
}

Pow2Level Pow2Level::negated() const {
  Pow2Level n = *this;
  n.f = -f;
  if (!single) n.g = -g;
  return n;
}

std::string Pow2Level::to_string() const {
  std::ostringstream os;
  os << (f < 0 ? "-" : "") << "2^" << i;
  if (!single) os << (g < 0 ? " - " : " + ") << "2^" << j;
  return os.str();
}

int nearest_exponent(double a, ExponentRange range) {
  if (a <= std::ldexp(1.0, range.min)) return range.min;
  if (a >= std::ldexp(1.0, range.max)) return range.max;
  const int k = std::ilogb(a);  // 2^k <= a < 2^(k+1)
  const double below = a - std::ldexp(1.0, k);
  const double above = std::ldexp(1.0, k + 1) - a;
  return below <= above ? k : k + 1;
}

Pow2Level pow2_approx(double x, ExponentRange range, bool* clamped) {
  if (x == 0.0) {
    throw std::invalid_argument("pow2_approx: zero is a reserved level and has no pow2 form");
  }
  if (!std::isfinite(x)) throw std::invalid_argument("pow2_approx: non-finite input");
  if (range.min > range.max) throw std::invalid_argument("pow2_approx: empty exponent range");

  const double a = std::abs(x);
  const double lo = std::ldexp(1.0, range.min);
  const double hi = std::ldexp(1.0, range.max) + std::ldexp(1.0, range.max);
  if (clamped) *clamped = a < lo || a > hi;

  Pow2Level level;
  level.f = x < 0 ? -1 : 1;
  level.i = nearest_exponent(a, range);
  const double first = std::ldexp(1.0, level.i);
  const double residual = a - first;  // exact: both lie in adjacent binades
  if (residual == 0.0) {
    level.single = true;
    return level;
  }
  // Work on |x| and mirror at the end, so pow2_approx(-x) == -pow2_approx(x).
  const int g_abs = residual > 0 ? 1 : -1;
  const int j = nearest_exponent(std::abs(residual), range);
  const double two_term = first + g_abs * std::ldexp(1.0, j);
  if (two_term == 0.0 || std::abs(a - two_term) >= std::abs(residual)) {
    // Only reachable at the edge of the exponent window; zero is reserved.
    level.single = true;
    return level;
  }
  level.g = level.f * g_abs;
  level.j = j;
  return level;
}

}  // namespace fsolc::compress
