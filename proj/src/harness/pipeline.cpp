#include "fsolc/harness/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "fsolc/nn/serialize.hpp"

namespace fsolc::harness {

namespace fs = std::filesystem;
using nlohmann::json;

nn::Network make_network(const ExperimentConfig& cfg) {
  const auto& n = cfg.network;
  auto net = cfg.link.system == channel::System::kSiso
                 ? nn::make_siso_cnn(cfg.link.block_len, n.kernel, n.filters)
                 : nn::make_simo_cnn(cfg.link.antennas, cfg.link.block_len, n.kernel, n.kernel, n.filters);
  net.init_he_uniform(Seeds::from(cfg.seed).init);
  return net;
}

TrainOutcome train_full(const ExperimentConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  TrainOutcome out{make_network(cfg), {}};
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.train.learning_rate;
  nn::AdamState adam(adam_cfg, out.net.params());
  channel::LinkBatchSource source(
      channel::DatasetStream(cfg.link, cfg.train.snr_db, Seeds::from(cfg.seed).train_data));
  for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
    nn::EpochStats stats;
    try {
      stats = nn::train_epoch(out.net, adam, source, cfg.train.epoch_size, cfg.train.batch_size);
    } catch (const nn::DivergenceError& err) {
      throw nn::DivergenceError(std::string("training diverged in epoch ") + std::to_string(e) + ": " +
                                    err.what(),
                                static_cast<long>(e));
    }
    out.epochs.push_back(stats);
    if (on_epoch) on_epoch(e, stats);
  }
  return out;
}

CompressionReport compression_report(const compress::QuantizedModel& model, const std::string& method) {
  CompressionReport r;
  r.method = method;
  r.bits = model.bits;
  r.quantized_params = model.quantized_parameter_count();
  r.quantized_layers = model.quantized_tensor_count();
  r.raw_params = model.raw_parameter_count();
  r.pruned = model.pruned_count();
  if (r.quantized_params > 0) {
    r.rate = compress::compression_rate(r.quantized_params, r.quantized_layers, model.bits);
  }
  for (const auto& t : model.tensors) {
    if (!t.quantized) continue;
    LayerSummary s;
    s.name = t.name;
    s.count = t.indices.size();
    s.pruned = static_cast<std::size_t>(
        std::count(t.indices.begin(), t.indices.end(), t.codebook.zero_index));
    for (const auto& lv : t.codebook.levels) s.levels.push_back(lv.value);
    std::sort(s.levels.begin(), s.levels.end());
    r.layers.push_back(std::move(s));
  }
  return r;
}

json to_json(const CompressionReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"name", l.name},
                      {"weights", l.count},
                      {"pruned", l.pruned},
                      {"level_count", l.levels.size()},
                      {"levels", l.levels}});
  }
  return {{"method", r.method},
          {"bits", r.bits},
          {"quantized_params", r.quantized_params},
          {"quantized_layers", r.quantized_layers},
          {"raw_params", r.raw_params},
          {"pruned", r.pruned},
          {"compression_rate", r.rate},
          {"layers", layers}};
}

CompressOutcome compress_lc(const nn::Network& trained, const ExperimentConfig& cfg, int bits) {
  cfg.validate();
  channel::LinkBatchSource source(
      channel::DatasetStream(cfg.link, cfg.train.snr_db, Seeds::from(cfg.seed).lc_data(bits)));
  nn::AdamConfig adam;
  adam.learning_rate = cfg.train.learning_rate;
  auto res = compress::lc_train(trained, source, cfg.lc_config(bits), adam);
  CompressOutcome out{std::move(res.model), std::move(res.trace), {}};
  out.report = compression_report(out.model, "lc");
  return out;
}

CompressOutcome compress_post(const nn::Network& trained, const ExperimentConfig& cfg, int bits) {
  compress::CodebookOptions opts;
  opts.range = cfg.compress.range;
  CompressOutcome out{compress::post_train_compress(trained, bits, opts), {}, {}};
  out.report = compression_report(out.model, "post");
  return out;
}

namespace {

void check_fits(const ExperimentConfig& cfg, const nn::Shape& input, const std::string& tag) {
  if (input != cfg.link.input_shape()) {
    throw ConfigError("model for " + tag + " expects input " + nn::shape_to_string(input) +
                      " but the link produces " + nn::shape_to_string(cfg.link.input_shape()));
  }
}

}  // namespace

std::vector<std::unique_ptr<rx::Receiver>> build_receivers(const ExperimentConfig& cfg,
                                                           const ModelSet& models) {
  std::vector<std::unique_ptr<rx::Receiver>> out;
  for (const auto& name : cfg.receivers) {
    const auto tag = ReceiverTag::parse(name);
    switch (tag.kind) {
      case ReceiverTag::Kind::kMlPerfect:
        out.push_back(std::make_unique<rx::MlReceiver>(name, std::nullopt));
        break;
      case ReceiverTag::Kind::kMlImperfect:
        out.push_back(std::make_unique<rx::MlReceiver>(name, cfg.csi));
        break;
      case ReceiverTag::Kind::kCnnFull:
        if (!models.full) throw ConfigError("receiver cnn_full needs a full-precision checkpoint");
        check_fits(cfg, models.full->input_shape(), name);
        out.push_back(std::make_unique<rx::CnnReceiver>(name, *models.full));
        break;
      case ReceiverTag::Kind::kCnnLc:
      case ReceiverTag::Kind::kCnnPost: {
        const auto& pool = tag.kind == ReceiverTag::Kind::kCnnLc ? models.lc : models.post;
        const auto it = pool.find(tag.bits);
        if (it == pool.end()) throw ConfigError("receiver " + name + " needs a compressed model");
        if (it->second.bits != tag.bits) {
          throw ConfigError("model for " + name + " has " + std::to_string(it->second.bits) + " bits");
        }
        check_fits(cfg, it->second.input_shape, name);
        out.push_back(std::make_unique<rx::CnnReceiver>(name, it->second, cfg.sweep.shift_add));
        break;
      }
    }
  }
  return out;
}

json provenance(const ExperimentConfig& cfg) {
  return {{"version", version_string()}, {"config_hash", config_hash(cfg)}, {"config", to_json(cfg)}};
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

std::string model_tag(const CompressOutcome& c) {
  return "cnn_" + c.report.method + "_" + std::to_string(c.report.bits) + "bit";
}

void write_config(const std::string& out_dir, const ExperimentConfig& cfg) {
  fs::create_directories(out_dir);
  write_json(fs::path(out_dir) / "config.json", provenance(cfg));
}

void write_train_outputs(const std::string& out_dir, const ExperimentConfig& cfg,
                         const TrainOutcome& trained) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const std::string hash = config_hash(cfg);
  nn::save_checkpoint((dir / "checkpoint_full.fsck").string(), trained.net);
  auto csv = open_out(dir / "train_log.csv");
  csv << "config_hash,version,epoch,loss,samples\n" << std::setprecision(17);
  for (std::size_t e = 0; e < trained.epochs.size(); ++e) {
    csv << hash << ',' << version_string() << ',' << e << ',' << trained.epochs[e].mean_loss << ','
        << trained.epochs[e].samples << '\n';
  }
  if (!csv) throw std::runtime_error("write failed for train_log.csv");
}

void write_compress_outputs(const std::string& out_dir, const ExperimentConfig& cfg,
                            const CompressOutcome& c) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const std::string tag = model_tag(c);
  compress::save_model((dir / ("model_" + tag + ".fsqm")).string(), c.model);
  if (c.report.method == "lc") {
    const std::string hash = config_hash(cfg);
    auto csv = open_out(dir / ("lc_trace_" + std::to_string(c.report.bits) + "bit.csv"));
    csv << "config_hash,version,epoch,loss,distance,mu,pruned,quantized\n" << std::setprecision(17);
    for (const auto& r : c.trace) {
      csv << hash << ',' << version_string() << ',' << r.epoch << ',' << r.loss << ',' << r.distance << ','
          << r.mu << ',' << r.pruned << ',' << r.quantized << '\n';
    }
    if (!csv) throw std::runtime_error("write failed for the LC trace");
  }
  auto rep = provenance(cfg);
  rep["report"] = to_json(c.report);
  write_json(dir / ("compression_" + tag + ".json"), rep);
}

void write_sweep_outputs(const std::string& out_dir, const ExperimentConfig& cfg,
                         const SweepResult& result) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    auto csv = open_out(dir / "ber.csv");
    csv << kBerCsvHeader << '\n';
    for (const auto& r : result.records) csv << csv_row(r) << '\n';
    if (!csv) throw std::runtime_error("write failed for ber.csv");
  }
  json records = json::array();
  for (const auto& r : result.records) records.push_back(to_json(r));
  auto j = provenance(cfg);
  j["schema"] = "fsolc-ber/1";
  j["records"] = records;
  j["total_symbols"] = result.total_symbols;
  j["low_confidence"] = result.low_confidence;
  j["snr_definition"] = "SNR = 1/sigma^2, unit-mean channel, OOK in {0,1}";
  write_json(dir / "ber.json", j);
  // Tool-agnostic plot description for ber.csv.
  write_json(dir / "plot.json",
             {{"schema", "fsolc-plot/1"},
              {"data", "ber.csv"},
              {"x", {{"column", "snr_db"}, {"label", "SNR (dB)"}, {"scale", "linear"}}},
              {"y", {{"column", "ber"}, {"label", "BER"}, {"scale", "log"}}},
              {"error_bars", {{"low", "ci_low"}, {"high", "ci_high"}}},
              {"series", "receiver"},
              {"title", cfg.name},
              {"version", version_string()},
              {"config_hash", config_hash(cfg)}});
}

ReproduceOutcome reproduce(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream* log) {
  cfg.validate();
  const bool write = !out_dir.empty();
  const fs::path dir(out_dir);
  if (write) write_config(out_dir, cfg);
  auto say = [&](const std::string& msg) {
    if (log) *log << msg << std::endl;
  };

  ReproduceOutcome out;
  const bool needs_cnn = std::any_of(cfg.receivers.begin(), cfg.receivers.end(),
                                     [](const std::string& r) { return ReceiverTag::parse(r).is_cnn(); });
  if (needs_cnn) {
    say("training " + cfg.name + " (" + std::to_string(cfg.train.epochs) + " epochs x " +
        std::to_string(cfg.train.epoch_size) + ")");
    auto trained = train_full(cfg, [&](std::size_t e, const nn::EpochStats& s) {
      std::ostringstream m;
      m << "  epoch " << e << " loss " << std::setprecision(6) << s.mean_loss;
      say(m.str());
    });
    out.train_log = trained.epochs;
    out.models.full = trained.net;
    if (write) write_train_outputs(out_dir, cfg, trained);
    for (int b : cfg.lc_bits()) {
      say("LC compression, " + std::to_string(b) + " bit");
      auto c = compress_lc(trained.net, cfg, b);
      const std::string tag = "cnn_lc_" + std::to_string(b) + "bit";
      {
        std::ostringstream m;
        m << "  distance " << (c.trace.empty() ? 0.0 : c.trace.back().distance) << ", rate "
          << c.report.rate;
        say(m.str());
      }
      if (write) write_compress_outputs(out_dir, cfg, c);
      out.lc_traces[b] = c.trace;
      out.reports[tag] = c.report;
      out.models.lc.emplace(b, std::move(c.model));
    }
    for (int b : cfg.post_bits()) {
      say("post-training compression, " + std::to_string(b) + " bit");
      auto c = compress_post(trained.net, cfg, b);
      const std::string tag = "cnn_post_" + std::to_string(b) + "bit";
      if (write) write_compress_outputs(out_dir, cfg, c);
      out.reports[tag] = c.report;
      out.models.post.emplace(b, std::move(c.model));
    }
  }

  const auto receivers = build_receivers(cfg, out.models);
  std::vector<const rx::Receiver*> ptrs;
  for (const auto& r : receivers) ptrs.push_back(r.get());
  say("sweep over " + std::to_string(cfg.sweep.snr_db.size()) + " SNR points");
  std::unique_ptr<std::ofstream> live;
  if (write) {
    live = std::make_unique<std::ofstream>(dir / "ber.csv");
    *live << kBerCsvHeader << '\n';
  }
  out.sweep = run_sweep(cfg, ptrs, [&](const BerRecord& r) {
    if (live) *live << csv_row(r) << std::endl;
    std::ostringstream m;
    m << "  " << std::setw(18) << std::left << r.receiver << " snr " << std::setw(6) << r.snr_db
      << " ber " << std::setprecision(4) << r.ber << " (" << r.errors << "/" << r.symbols << ")"
      << (r.low_confidence ? " low-confidence" : "");
    say(m.str());
  });
  if (write) {
    live.reset();
    write_sweep_outputs(out_dir, cfg, out.sweep);
  }
  return out;
}

}  // namespace fsolc::harness
