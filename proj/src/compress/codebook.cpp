#include "fsolc/compress/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fsolc::compress {
namespace {

std::vector<double> midpoints(const std::vector<CodebookLevel>& levels) {
  std::vector<double> b;
  for (std::size_t k = 0; k + 1 < levels.size(); ++k) {
    b.push_back(0.5 * (levels[k].value + levels[k + 1].value));
  }
  return b;
}

void finalize(LayerCodebook& cb) {
  std::sort(cb.levels.begin(), cb.levels.end(),
            [](const CodebookLevel& a, const CodebookLevel& b) { return a.value < b.value; });
  for (std::size_t k = 0; k < cb.levels.size(); ++k) {
    if (!cb.levels[k].pow2) cb.zero_index = k;
  }
  cb.borders = midpoints(cb.levels);
}

// Means of the areas [b_k, b_{k+1}); the last area is closed. Empty areas
// fall back to the midpoint of their borders.
std::vector<double> area_means(std::span<const double> sorted_w,
                               const std::vector<double>& borders) {
  std::vector<double> means;
  for (std::size_t k = 0; k + 1 < borders.size(); ++k) {
    const double lo = borders[k], hi = borders[k + 1];
    const bool last = k + 2 == borders.size();
    auto first = std::lower_bound(sorted_w.begin(), sorted_w.end(), lo);
    auto end = last ? std::upper_bound(sorted_w.begin(), sorted_w.end(), hi)
                    : std::lower_bound(sorted_w.begin(), sorted_w.end(), hi);
    if (first >= end) {
      means.push_back(0.5 * (lo + hi));
    } else {
      const double s = std::accumulate(first, end, 0.0);
      means.push_back(s / static_cast<double>(end - first));
    }
  }
  return means;
}

struct Assignment {
  std::vector<std::uint32_t> cluster;
  double sse = 0.0;
};

std::uint32_t nearest_center(const std::vector<double>& c, double x) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t k = 0; k < c.size(); ++k) {
    const double d = std::abs(x - c[k]);
    if (d < best_d || (d == best_d && std::abs(c[k]) < std::abs(c[best]))) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

Assignment assign(std::span<const double> w, const std::vector<double>& centers) {
  Assignment a;
  a.cluster.resize(w.size());
  for (std::size_t n = 0; n < w.size(); ++n) {
    const std::uint32_t k = nearest_center(centers, w[n]);
    a.cluster[n] = k;
    const double d = w[n] - centers[k];
    a.sse += d * d;
  }
  return a;
}

}  // namespace

std::vector<double> LayerCodebook::values() const {
  std::vector<double> v;
  v.reserve(levels.size());
  for (const auto& l : levels) v.push_back(l.value);
  return v;
}

void LayerCodebook::validate() const {
  if (bits < 1) throw std::invalid_argument("codebook: bits must be >= 1");
  if (levels.empty()) throw std::invalid_argument("codebook: no levels");
  if (zero_index >= levels.size() || levels[zero_index].value != 0.0 ||
      levels[zero_index].pow2) {
    throw std::invalid_argument("codebook: zero level missing or misplaced");
  }
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (k > 0 && !(levels[k - 1].value < levels[k].value)) {
      throw std::invalid_argument("codebook: levels not strictly increasing");
    }
    if (k != zero_index && (!levels[k].pow2 || levels[k].pow2->value() != levels[k].value)) {
      throw std::invalid_argument("codebook: level " + std::to_string(k) +
                                  " does not match its pow2 form");
    }
  }
  const std::size_t expected = (std::size_t{1} << bits) + 1;
  if (!degenerate && levels.size() != expected) {
    throw std::invalid_argument("codebook: expected " + std::to_string(expected) +
                                " levels, have " + std::to_string(levels.size()));
  }
  if (borders != midpoints(levels)) {
    throw std::invalid_argument("codebook: borders are not level midpoints");
  }
}

LayerCodebook codebook_from_levels(int bits, std::vector<CodebookLevel> levels,
                                   bool degenerate) {
  LayerCodebook cb;
  cb.bits = bits;
  cb.levels = std::move(levels);
  cb.degenerate = degenerate;
  finalize(cb);
  cb.validate();
  return cb;
}

LayerCodebook make_codebook(int bits, std::vector<double> values, ExponentRange range) {
  LayerCodebook cb;
  cb.bits = bits;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  bool has_zero = false;
  for (double v : values) {
    if (v == 0.0) {
      has_zero = true;
      cb.levels.push_back({0.0, std::nullopt});
      continue;
    }
    const Pow2Level p = pow2_approx(v, range);
    if (p.value() != v) {
      throw std::invalid_argument("make_codebook: " + std::to_string(v) +
                                  " is not a two-term power of two");
    }
    cb.levels.push_back({v, p});
  }
  if (!has_zero) cb.levels.push_back({0.0, std::nullopt});
  cb.degenerate = cb.levels.size() != (std::size_t{1} << bits) + 1;
  finalize(cb);
  return cb;
}

CodebookFit learn_codebook(std::span<const double> weights, int bits,
                           const LayerCodebook* /*prev*/, const CodebookOptions& options) {
  if (weights.empty()) throw std::invalid_argument("learn_codebook: no weights");
  if (bits < 1 || bits > 16) throw std::invalid_argument("learn_codebook: bits out of range");
  for (double v : weights) {
    if (!std::isfinite(v)) throw std::invalid_argument("learn_codebook: non-finite weight");
  }

  CodebookFit fit;
  fit.codebook.bits = bits;
  std::vector<double> sorted(weights.begin(), weights.end());
  std::sort(sorted.begin(), sorted.end());
  const double w_min = sorted.front(), w_max = sorted.back();

  if (w_min == w_max) {
    fit.warnings.push_back("all weights equal " + std::to_string(w_min) +
                           "; degenerate codebook");
    fit.codebook.degenerate = true;
    fit.codebook.levels.push_back({0.0, std::nullopt});
    if (w_min != 0.0) {
      bool clamped = false;
      const Pow2Level p = pow2_approx(w_min, options.range, &clamped);
      fit.codebook.levels.push_back({p.value(), p});
      fit.centers = {w_min};
    }
    finalize(fit.codebook);
    fit.initial_borders = {w_min, w_max};
    fit.initial_centers = fit.codebook.values();
    fit.sse_history.push_back(0.0);
    return fit;
  }

  const double w_mean =
      std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  std::vector<double> borders{w_min, w_mean, w_max};
  std::vector<double> means = area_means(sorted, borders);
  for (int level = 2; level <= bits; ++level) {
    borders.insert(borders.end(), means.begin(), means.end());
    std::sort(borders.begin(), borders.end());
    means = area_means(sorted, borders);
  }
  fit.initial_borders = borders;

  // Pinned zero sits at index 0 of `centers`.
  std::vector<double> centers{0.0};
  centers.insert(centers.end(), means.begin(), means.end());
  fit.initial_centers = centers;
  std::sort(fit.initial_centers.begin(), fit.initial_centers.end());

  Assignment a = assign(weights, centers);
  fit.sse_history.push_back(a.sse);
  const std::size_t K = centers.size();
  while (fit.iterations < options.max_iterations) {
    std::vector<double> sum(K, 0.0);
    std::vector<std::size_t> count(K, 0);
    for (std::size_t n = 0; n < weights.size(); ++n) {
      sum[a.cluster[n]] += weights[n];
      ++count[a.cluster[n]];
    }
    std::vector<bool> reseeded(weights.size(), false);
    for (std::size_t k = 1; k < K; ++k) {
      if (count[k] > 0) {
        centers[k] = sum[k] / static_cast<double>(count[k]);
        continue;
      }
      // Empty cluster: move it onto the worst-served weight.
      std::size_t far = weights.size();
      double far_d = 0.0;
      for (std::size_t n = 0; n < weights.size(); ++n) {
        const double d = std::abs(weights[n] - centers[a.cluster[n]]);
        if (!reseeded[n] && d > far_d) {
          far_d = d;
          far = n;
        }
      }
      if (far < weights.size()) {
        centers[k] = weights[far];
        reseeded[far] = true;
      }
    }
    ++fit.iterations;
    Assignment next = assign(weights, centers);
    fit.sse_history.push_back(next.sse);
    const bool changed = next.cluster != a.cluster;
    a = std::move(next);
    if (!changed) break;
  }

  fit.centers.assign(centers.begin() + 1, centers.end());
  std::sort(fit.centers.begin(), fit.centers.end());

  LayerCodebook& cb = fit.codebook;
  cb.levels.push_back({0.0, std::nullopt});
  std::vector<double> used{0.0};
  for (double c : fit.centers) {
    Pow2Level p;
    if (c == 0.0) {
      p = nearest_free_pow2(std::ldexp(1.0, options.range.min), options.range,
                            [&](double v) { return std::find(used.begin(), used.end(), v) != used.end(); });
      fit.warnings.push_back("a cluster collapsed onto zero; padded with an unused level");
    } else {
      bool clamped = false;
      p = pow2_approx(c, options.range, &clamped);
      if (clamped) {
        fit.warnings.push_back("center " + std::to_string(c) +
                               " outside the exponent range; clamped");
      }
      if (std::find(used.begin(), used.end(), p.value()) != used.end()) {
        p = nearest_free_pow2(c, options.range, [&](double v) {
          return std::find(used.begin(), used.end(), v) != used.end();
        });
      }
    }
    used.push_back(p.value());
    cb.levels.push_back({p.value(), p});
  }
  finalize(cb);
  return fit;
}

std::uint32_t nearest_level(const LayerCodebook& cb, double x) {
  const auto& b = cb.borders;
  const std::size_t guess =
      static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), x) - b.begin());
  // Settle the decision on true distances; midpoints are rounded.
  std::size_t best = guess;
  const std::size_t lo = guess > 0 ? guess - 1 : 0;
  const std::size_t hi = std::min(guess + 1, cb.levels.size() - 1);
  for (std::size_t k = lo; k <= hi; ++k) {
    const double d = std::abs(x - cb.levels[k].value);
    const double bd = std::abs(x - cb.levels[best].value);
    if (d < bd || (d == bd && std::abs(cb.levels[k].value) < std::abs(cb.levels[best].value))) {
      best = k;
    }
  }
  return static_cast<std::uint32_t>(best);
}

std::vector<std::uint32_t> nearest_levels(const LayerCodebook& cb,
                                          std::span<const double> targets) {
  std::vector<std::uint32_t> idx(targets.size());
  for (std::size_t n = 0; n < targets.size(); ++n) idx[n] = nearest_level(cb, targets[n]);
  return idx;
}

std::vector<std::uint32_t> project_indices(const nn::Tensor& w, const nn::Tensor& lambda,
                                           double mu, const LayerCodebook& cb) {
  if (w.shape() != lambda.shape()) {
    throw nn::ShapeError("project: weights " + nn::shape_to_string(w.shape()) +
                         " vs multipliers " + nn::shape_to_string(lambda.shape()));
  }
  if (!(mu > 0.0)) throw std::invalid_argument("project: mu must be positive");
  std::vector<std::uint32_t> idx(w.size());
  for (std::size_t n = 0; n < w.size(); ++n) {
    idx[n] = nearest_level(cb, w[n] - lambda[n] / mu);
  }
  return idx;
}

nn::Tensor project(const nn::Tensor& w, const nn::Tensor& lambda, double mu,
                   const LayerCodebook& cb) {
  return decode_indices(cb, w.shape(), project_indices(w, lambda, mu, cb));
}

nn::Tensor decode_indices(const LayerCodebook& cb, const nn::Shape& shape,
                          std::span<const std::uint32_t> indices) {
  nn::Tensor out(shape);
  if (out.size() != indices.size()) {
    throw nn::ShapeError("decode: " + std::to_string(indices.size()) +
                         " indices for shape " + nn::shape_to_string(shape));
  }
  for (std::size_t n = 0; n < indices.size(); ++n) {
    if (indices[n] >= cb.levels.size()) {
      throw std::out_of_range("decode: index " + std::to_string(indices[n]) +
                              " outside a codebook of " + std::to_string(cb.levels.size()));
    }
    out[n] = cb.levels[indices[n]].value;
  }
  return out;
}

}  // namespace fsolc::compress
