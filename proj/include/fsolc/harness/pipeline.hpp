#pragma once

#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fsolc/compress/lc.hpp"
#include "fsolc/harness/config.hpp"
#include "fsolc/harness/sweep.hpp"
#include "fsolc/nn/trainer.hpp"

namespace fsolc::harness {

nn::Network make_network(const ExperimentConfig& cfg);

using EpochCallback = std::function<void(std::size_t epoch, const nn::EpochStats&)>;

struct TrainOutcome {
  nn::Network net;
  std::vector<nn::EpochStats> epochs;
};

/// Full-precision training on generated data. Deterministic in cfg.seed.
/// Throws nn::DivergenceError when a loss turns non-finite.
TrainOutcome train_full(const ExperimentConfig& cfg, const EpochCallback& on_epoch = {});

struct LayerSummary {
  std::string name;
  std::size_t count = 0;
  std::size_t pruned = 0;
  std::vector<double> levels;  // decoded level values, ascending
};

struct CompressionReport {
  std::string method;  // "lc" or "post"
  int bits = 0;
  std::size_t quantized_params = 0;  // P
  std::size_t quantized_layers = 0;  // L
  std::size_t raw_params = 0;        // biases and other unquantized tensors
  std::size_t pruned = 0;
  double rate = 0.0;  // 32 P / ((b + 1) P + 2^b 17 L)
  std::vector<LayerSummary> layers;
};

CompressionReport compression_report(const compress::QuantizedModel& model, const std::string& method);
nlohmann::json to_json(const CompressionReport& r);

struct CompressOutcome {
  compress::QuantizedModel model;
  std::vector<compress::LcEpochRecord> trace;  // empty for post-training
  CompressionReport report;
};

CompressOutcome compress_lc(const nn::Network& trained, const ExperimentConfig& cfg, int bits);
CompressOutcome compress_post(const nn::Network& trained, const ExperimentConfig& cfg, int bits);

/// Trained models available to build receivers from.
struct ModelSet {
  std::optional<nn::Network> full;
  std::map<int, compress::QuantizedModel> lc, post;
};

/// One receiver per cfg.receivers entry, in order. Throws ConfigError when
/// a CNN receiver has no model in `models`, or a model does not fit the link.
std::vector<std::unique_ptr<rx::Receiver>> build_receivers(const ExperimentConfig& cfg,
                                                           const ModelSet& models);

struct ReproduceOutcome {
  ModelSet models;
  std::vector<nn::EpochStats> train_log;
  std::map<int, std::vector<compress::LcEpochRecord>> lc_traces;
  std::map<std::string, CompressionReport> reports;  // keyed by receiver tag
  SweepResult sweep;
};

/// Train, compress as the receiver list requires, and sweep. With a
/// non-empty `out_dir` every artifact is written there (see docs/formats.md);
/// progress lines go to `log` when given.
ReproduceOutcome reproduce(const ExperimentConfig& cfg, const std::string& out_dir,
                           std::ostream* log = nullptr);

/// "cnn_lc_1bit" style receiver tag of a compression outcome.
std::string model_tag(const CompressOutcome& c);

/// Artifact writers shared by reproduce and the command line tool.
void write_config(const std::string& out_dir, const ExperimentConfig& cfg);
void write_train_outputs(const std::string& out_dir, const ExperimentConfig& cfg,
                         const TrainOutcome& trained);
void write_compress_outputs(const std::string& out_dir, const ExperimentConfig& cfg,
                            const CompressOutcome& c);

/// Writes the sweep artifacts (ber.csv, ber.json, plot.json) for `result`.
void write_sweep_outputs(const std::string& out_dir, const ExperimentConfig& cfg,
                         const SweepResult& result);

/// {"version", "config_hash", "config"} block embedded in JSON outputs.
nlohmann::json provenance(const ExperimentConfig& cfg);

}  // namespace fsolc::harness
