#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsolc/channel/link.hpp"
#include "fsolc/compress/lc.hpp"
#include "fsolc/rx/receivers.hpp"

namespace fsolc::harness {

/// Invalid or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string version_string();

struct NetworkConfig {
  std::size_t kernel = 3;  // conv kernel width (and height for SIMO)
  std::vector<std::size_t> filters{32, 64, 128};
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t epoch_size = 30000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::vector<double> snr_db;  // training blocks draw their SNR from here
};

struct CompressConfig {
  double a = 1.008;
  double mu0 = 1e-3;
  std::size_t epochs = 30;
  std::size_t epoch_size = 30000;
  compress::MuSchedule schedule = compress::MuSchedule::kAsWritten;
  compress::ExponentRange range;
};

struct SweepConfig {
  std::vector<double> snr_db;
  std::uint64_t min_symbols = 100000;
  std::uint64_t max_symbols = 10000000;
  std::uint64_t min_errors = 100;
  std::size_t chunk_blocks = 1000;
  bool shift_add = false;  // run compressed CNNs through the shift-add engine
  std::vector<double> fixed_channel;  // when set, every block uses this h
};

/// Receiver tags: cnn_full, cnn_lc_<b>bit, cnn_post_<b>bit, ml_perfect_csi,
/// ml_imperfect_csi.
struct ReceiverTag {
  enum class Kind { kCnnFull, kCnnLc, kCnnPost, kMlPerfect, kMlImperfect };
  Kind kind = Kind::kCnnFull;
  int bits = 0;  // LC / post only

  static ReceiverTag parse(const std::string& tag);
  std::string str() const;
  bool is_cnn() const { return kind == Kind::kCnnFull || kind == Kind::kCnnLc || kind == Kind::kCnnPost; }
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  channel::LinkConfig link;
  std::optional<double> rytov_var;  // when set, alpha and beta derive from it
  NetworkConfig network;
  TrainConfig train;
  CompressConfig compress;
  SweepConfig sweep;
  rx::CsiErrorModel csi;
  std::vector<std::string> receivers;

  /// Throws ConfigError describing the first problem found.
  void validate() const;
  /// Distinct compression bit widths the receiver list needs.
  std::vector<int> lc_bits() const;
  std::vector<int> post_bits() const;
  compress::LcConfig lc_config(int bits) const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Strict: unknown keys and wrong types are ConfigErrors. Missing keys keep
/// their defaults. channel takes either {alpha, beta} or {rytov}.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

enum class Scale { kDesk, kFull };
Scale scale_from_string(const std::string& s);
std::string to_string(Scale s);

/// Preset for figures 4 (SISO 1-bit), 5 (SISO 2-bit), 6 (SIMO 1-bit) and 7
/// (SIMO 2-bit). Throws ConfigError for any other figure number.
ExperimentConfig figure_preset(int figure, Scale scale);

/// Derived seeds for the pipeline stages.
struct Seeds {
  std::uint64_t init, train_data, eval;
  std::uint64_t lc_data(int bits) const;
  static Seeds from(std::uint64_t master);
};

}  // namespace fsolc::harness
