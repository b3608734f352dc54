#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fsolc/channel/gamma_gamma.hpp"
#include "fsolc/nn/trainer.hpp"

namespace fsolc::channel {

enum class System : std::uint8_t { kSiso = 0, kSimo = 1 };

std::string_view to_string(System system);
System system_from_string(std::string_view name);

struct LinkConfig {
  System system = System::kSiso;
  std::size_t block_len = 10;  // L, symbols per coherence interval
  std::size_t antennas = 8;    // M, ignored for SISO
  TurbulenceParams turbulence;

  std::size_t receive_antennas() const { return system == System::kSiso ? 1 : antennas; }
  /// Per-sample network input shape: {L} or {M, L}.
  std::vector<std::size_t> input_shape() const;
  void validate() const;
};

/// Noise standard deviation for SNR = 1 / sigma^2.
double noise_sigma(double snr_db);

/// splitmix64 finaliser, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t block_seed(std::uint64_t master, std::uint64_t block);

/// One coherence block. x is row-major M x L (a single row for SISO):
/// x[m*L + l] = h[m] * s[l] + noise.
struct LinkSample {
  std::uint64_t block = 0;
  std::uint64_t seed = 0;
  double snr_db = 0.0;
  double sigma = 0.0;
  std::vector<double> h;
  std::vector<std::uint8_t> s;
  std::vector<double> x;
};

/// Fully determined by (cfg, snr_db, seed): channel, then bits, then noise,
/// all from one mt19937_64 seeded with `seed`.
LinkSample generate_block(const LinkConfig& cfg, double snr_db, std::uint64_t seed,
                          std::uint64_t block = 0);
/// Same with a given channel instead of a drawn one (bits and noise still
/// come from `seed`).
LinkSample generate_block_with_channel(const LinkConfig& cfg, std::vector<double> h,
                                       double snr_db, std::uint64_t seed,
                                       std::uint64_t block = 0);

/// Endless stream of blocks. In training mode each block's SNR is drawn
/// uniformly from the grid; in fixed mode the grid must hold one point.
class DatasetStream {
 public:
  enum class Mode { kTraining, kFixed };

  DatasetStream(LinkConfig cfg, std::vector<double> snr_grid_db, std::uint64_t master_seed,
                Mode mode = Mode::kTraining, std::uint64_t first_block = 0);

  LinkSample next();
  /// The block that next() would return after `index - first_block` calls.
  LinkSample at(std::uint64_t index) const;
  const LinkConfig& config() const { return cfg_; }
  std::uint64_t position() const { return next_; }

 private:
  LinkConfig cfg_;
  std::vector<double> grid_;
  std::uint64_t master_;
  Mode mode_;
  std::uint64_t next_;
};

/// Training batches from a DatasetStream: inputs {B, L} or {B, M, L},
/// targets {B, L} holding the transmitted bits.
class LinkBatchSource : public nn::BatchSource {
 public:
  explicit LinkBatchSource(DatasetStream stream) : stream_(std::move(stream)) {}
  nn::Batch next(std::size_t batch_size) override;

 private:
  DatasetStream stream_;
};

/// Packs blocks into a network batch (inputs and targets as above).
nn::Batch make_batch(const LinkConfig& cfg, const std::vector<LinkSample>& blocks);

void write_dataset(std::ostream& out, const LinkConfig& cfg,
                   const std::vector<LinkSample>& blocks);
std::vector<LinkSample> read_dataset(std::istream& in, LinkConfig* cfg_out = nullptr);
/// Header: block,seed,snr_db,sigma,h0..,s0..,x0..
void write_dataset_csv(std::ostream& out, const LinkConfig& cfg,
                       const std::vector<LinkSample>& blocks);

}  // namespace fsolc::channel
