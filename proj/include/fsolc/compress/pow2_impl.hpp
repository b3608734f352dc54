#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace fsolc::compress {

template <typename Pred>
Pow2Level nearest_free_pow2(double x, ExponentRange range, Pred taken) {
  const int centre = nearest_exponent(std::abs(x), range);
  Pow2Level best;
  double best_err = std::numeric_limits<double>::infinity();
  auto consider = [&](const Pow2Level& cand) {
    const double v = cand.value();
    if (v == 0.0 || taken(v)) return;
    const double err = std::abs(v - x);
    if (err < best_err) {
      best_err = err;
      best = cand;
    }
  };
  for (int i = std::max(range.min, centre - 3); i <= std::min(range.max, centre + 3); ++i) {
    for (int f : {1, -1}) {
      consider(Pow2Level{f, i, 1, 0, true});
      for (int j = range.min; j <= i; ++j) {
        for (int g : {1, -1}) consider(Pow2Level{f, i, g, j, false});
      }
    }
  }
  return best;
}

}  // namespace fsolc::compress
