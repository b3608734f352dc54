#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsolc/compress/pow2.hpp"
#include "fsolc/nn/tensor.hpp"

namespace fsolc::compress {

struct CodebookLevel {
  double value = 0.0;
  std::optional<Pow2Level> pow2;  // empty for the pinned zero level

  friend bool operator==(const CodebookLevel&, const CodebookLevel&) = default;
};

/// Per-layer codebook: 2^bits power-of-two levels plus an exact zero, sorted
/// ascending. `borders` are the decision boundaries (midpoints between
/// adjacent levels). A degenerate codebook, learned from constant weights,
/// holds fewer levels.
struct LayerCodebook {
  int bits = 1;
  std::vector<CodebookLevel> levels;
  std::size_t zero_index = 0;
  std::vector<double> borders;
  bool degenerate = false;

  std::size_t size() const { return levels.size(); }
  std::vector<double> values() const;
  /// Checks ordering, zero placement, pow2 consistency and cardinality;
  /// throws std::invalid_argument on violation.
  void validate() const;

  friend bool operator==(const LayerCodebook&, const LayerCodebook&) = default;
};

/// Builds a codebook from explicit level values (zero is added if missing).
/// Nonzero values must already be exactly representable in pow2 form.
LayerCodebook make_codebook(int bits, std::vector<double> values,
                            ExponentRange range = {});

/// Sorts the levels, locates zero, derives borders and validates.
LayerCodebook codebook_from_levels(int bits, std::vector<CodebookLevel> levels,
                                   bool degenerate = false);

struct CodebookOptions {
  ExponentRange range;
  std::size_t max_iterations = 100;
};

struct CodebookFit {
  LayerCodebook codebook;
  std::vector<double> initial_borders;  // hierarchical area borders
  std::vector<double> initial_centers;  // area means plus pinned zero, sorted
  std::vector<double> centers;          // after clustering, before pow2
  std::size_t iterations = 0;
  std::vector<double> sse_history;  // within-cluster SSE after each assignment
  std::vector<std::string> warnings;
};

/// Learns the levels and pruning limits of one layer:
///   1. hierarchical area borders starting from {w_min, w_mean, w_max}, each
///      bit adding the previous area means as new borders; area means are the
///      initial centers, plus a zero center;
///   2. k-means with the zero center pinned, until no assignment changes or
///      `max_iterations`;
///   3. each nonzero center replaced by its pow2 approximation (kept
///      distinct).
/// `prev` is accepted for warm-start experiments and currently unused.
CodebookFit learn_codebook(std::span<const double> weights, int bits,
                           const LayerCodebook* prev = nullptr,
                           const CodebookOptions& options = {});

/// Index of the level nearest to x; on an exact tie the level of smaller
/// magnitude wins (so a tie with zero prunes).
std::uint32_t nearest_level(const LayerCodebook& codebook, double x);

std::vector<std::uint32_t> nearest_levels(const LayerCodebook& codebook,
                                          std::span<const double> targets);

/// Elementwise nearest level to w - lambda/mu, which minimises
/// ||w - w_hat - lambda/mu||^2 over codebook-valued w_hat.
nn::Tensor project(const nn::Tensor& w, const nn::Tensor& lambda, double mu,
                   const LayerCodebook& codebook);

/// Same, returning level indices instead of values.
std::vector<std::uint32_t> project_indices(const nn::Tensor& w,
                                           const nn::Tensor& lambda, double mu,
                                           const LayerCodebook& codebook);

nn::Tensor decode_indices(const LayerCodebook& codebook, const nn::Shape& shape,
                          std::span<const std::uint32_t> indices);

}  // namespace fsolc::compress
