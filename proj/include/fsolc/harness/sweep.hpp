#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fsolc/harness/config.hpp"
#include "fsolc/rx/receivers.hpp"

namespace fsolc::harness {

struct Interval {
  double low = 0.0, high = 1.0;
};

/// Wilson score interval for `errors` out of `trials` at normal quantile z.
Interval wilson_interval(std::uint64_t errors, std::uint64_t trials, double z = 1.959963984540054);

struct BerRecord {
  std::string receiver;
  double snr_db = 0.0;
  std::uint64_t symbols = 0;
  std::uint64_t errors = 0;
  double ber = 0.0;
  double ci_low = 0.0, ci_high = 1.0;  // 95% Wilson
  bool low_confidence = false;         // stopped at max_symbols short of min_errors
  std::string config_hash;
  std::uint64_t seed = 0;  // master seed of the SNR point's blocks
};

/// Binomial standard error sqrt(p (1 - p) / n) of a record's BER.
double standard_error(const BerRecord& r);

struct SweepResult {
  std::vector<BerRecord> records;  // point-major, receiver order within a point
  std::uint64_t total_symbols = 0;
  std::size_t low_confidence = 0;
};

using RecordSink = std::function<void(const BerRecord&)>;

/// Worker threads from FSOLC_THREADS, else the hardware concurrency.
unsigned thread_count();

/// Master seed of the evaluation blocks at SNR point `point`.
std::uint64_t point_seed(const ExperimentConfig& cfg, std::size_t point);

/// Monte-Carlo BER of every receiver at every SNR point of cfg.sweep. All
/// receivers see the same blocks (block k of a point is the same for all);
/// each keeps consuming chunks until it has min_errors errors and
/// min_symbols symbols, or reaches max_symbols. Records reach `sink` one
/// SNR point at a time, in order, from the calling thread.
SweepResult run_sweep(const ExperimentConfig& cfg, const std::vector<const rx::Receiver*>& receivers,
                      const RecordSink& sink = {}, unsigned threads = 0);

inline constexpr const char* kBerCsvHeader =
    "schema,version,config_hash,receiver,snr_db,symbols,errors,ber,ci_low,ci_high,low_confidence,seed";

/// One CSV line (no newline) in kBerCsvHeader order.
std::string csv_row(const BerRecord& r);
nlohmann::json to_json(const BerRecord& r);
/// Parses rows written by csv_row; throws std::runtime_error on bad input.
std::vector<BerRecord> read_ber_csv(std::istream& in);

}  // namespace fsolc::harness
