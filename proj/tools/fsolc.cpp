// fsolc: train, compress and evaluate compressed FSO receivers.
#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <vector>

#include "fsolc/channel/link.hpp"
#include "fsolc/compress/lc.hpp"
#include "fsolc/compress/quantized_model.hpp"
#include "fsolc/harness/config.hpp"
#include "fsolc/harness/pipeline.hpp"
#include "fsolc/harness/sweep.hpp"
#include "fsolc/nn/serialize.hpp"
#include "fsolc/qinfer/engine.hpp"

using namespace fsolc;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitLowConfidence = 4;

harness::ExperimentConfig resolve(const std::string& path, std::optional<std::uint64_t> seed) {
  auto cfg = harness::load_config(path);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

std::string file_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw harness::ConfigError("cannot open '" + path + "'");
  char m[4] = {};
  in.read(m, 4);
  return std::string(m, static_cast<std::size_t>(in.gcount()));
}

void log_epoch(std::size_t e, const nn::EpochStats& s) {
  std::cerr << "epoch " << e << " loss " << std::setprecision(6) << s.mean_loss << '\n';
}

int finish_sweep(const harness::SweepResult& res) {
  if (res.low_confidence) {
    std::cerr << "warning: some points ended at max_symbols with fewer than min_errors errors\n";
    return kExitLowConfidence;
  }
  return kExitOk;
}

void print_record(const harness::BerRecord& r) {
  std::cerr << std::left << std::setw(18) << r.receiver << " snr " << std::setw(6) << r.snr_db << " ber "
            << std::setprecision(4) << r.ber << " (" << r.errors << "/" << r.symbols << ")"
            << (r.low_confidence ? " low-confidence" : "") << '\n';
}

json inspect(const std::string& path) {
  const std::string magic = file_magic(path);
  if (magic == "FSCK") {
    const auto net = nn::load_checkpoint(path);
    json j;
    j["kind"] = "checkpoint";
    j["architecture"] = nn::architecture_to_json(net.input_shape(), net.layers());
    j["parameters"] = net.parameter_count();
    std::size_t quantizable = 0, tensors = 0;
    const auto mask = net.quantizable_mask();
    for (std::size_t k = 0; k < mask.size(); ++k) {
      if (mask[k]) {
        quantizable += net.params()[k].size();
        ++tensors;
      }
    }
    j["kernel_parameters"] = quantizable;
    j["kernel_tensors"] = tensors;
    j["rate_1bit"] = compress::compression_rate(quantizable, tensors, 1);
    j["rate_2bit"] = compress::compression_rate(quantizable, tensors, 2);
    return j;
  }
  if (magic == "FSQM") {
    const auto model = compress::load_model(path);
    json j;
    j["kind"] = "quantized_model";
    j["architecture"] = nn::architecture_to_json(model.input_shape, model.layers);
    j["report"] = harness::to_json(harness::compression_report(model, "unknown"));
    j["report"].erase("method");
    return j;
  }
  throw harness::ConfigError("'" + path + "' is neither a checkpoint nor a quantized model");
}

json report_ops(const std::string& path, std::size_t batches, std::size_t batch_size, std::uint64_t seed) {
  const auto model = compress::load_model(path);
  const qinfer::Engine engine(model);
  const auto reference = model.to_network();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  nn::Shape shape{batch_size};
  shape.insert(shape.end(), model.input_shape.begin(), model.input_shape.end());
  auto counter = engine.make_counter();
  double max_diff = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    nn::Tensor x(shape);
    for (double& v : x.values()) v = gauss(rng);
    const auto q = engine.forward(x, &counter);
    const auto f = nn::forward(reference, x);
    for (std::size_t k = 0; k < q.size(); ++k) max_diff = std::max(max_diff, std::abs(q[k] - f[k]));
  }
  json j = qinfer::to_json(qinfer::count_report(counter, model));
  j["batches"] = batches;
  j["batch_size"] = batch_size;
  j["max_abs_diff_vs_decoded_network"] = max_diff;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compression-aware CNN receivers for FSO links"};
  app.set_version_flag("--version", harness::version_string());
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;

  auto* train = app.add_subcommand("train", "train the full-precision CNN");
  train->add_option("-c,--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("-o,--out", out_dir, "output directory")->required();
  train->add_option("--seed", seed, "override the master seed");

  std::string checkpoint, method = "lc";
  int bits = 1;
  auto* comp = app.add_subcommand("compress", "quantize and prune a trained checkpoint");
  comp->add_option("-c,--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  comp->add_option("--checkpoint", checkpoint, "full-precision checkpoint (.fsck)")->required()->check(CLI::ExistingFile);
  comp->add_option("-b,--bits", bits, "quantization bits")->check(CLI::Range(1, 8));
  comp->add_option("-m,--method", method, "lc or post")->check(CLI::IsMember({"lc", "post"}));
  comp->add_option("-o,--out", out_dir, "output directory")->required();
  comp->add_option("--seed", seed, "override the master seed");

  std::vector<std::string> model_paths;
  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo BER sweep over the configured receivers");
  sweep->add_option("-c,--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--checkpoint", checkpoint, "checkpoint for cnn_full")->check(CLI::ExistingFile);
  sweep->add_option("--model", model_paths, "TAG=PATH for cnn_lc_<b>bit / cnn_post_<b>bit receivers");
  sweep->add_option("-o,--out", out_dir, "output directory")->required();
  sweep->add_option("--seed", seed, "override the master seed");

  int figure = 4;
  std::string scale = "desk";
  auto* repro = app.add_subcommand("reproduce", "train, compress and sweep one figure's setup");
  repro->add_option("-f,--figure", figure, "4, 5 (SISO) or 6, 7 (SIMO)")->check(CLI::Range(4, 7));
  repro->add_option("-s,--scale", scale, "desk or full")->check(CLI::IsMember({"desk", "full"}));
  repro->add_option("-c,--config", config_path, "use this config instead of the preset")->check(CLI::ExistingFile);
  repro->add_option("-o,--out", out_dir, "output directory")->required();
  repro->add_option("--seed", seed, "override the master seed");

  std::string model_path;
  auto* insp = app.add_subcommand("inspect-model", "summarise a checkpoint or quantized model as JSON");
  insp->add_option("path", model_path, "model file")->required()->check(CLI::ExistingFile);

  std::size_t batches = 10, batch_size = 32;
  std::uint64_t ops_seed = 1;
  std::size_t rate_params = 0, rate_layers = 0;
  auto* ops = app.add_subcommand("report-ops", "shift/add counts of a quantized model, or the rate formula");
  auto* ops_model = ops->add_option("--model", model_path, "quantized model (.fsqm)")->check(CLI::ExistingFile);
  ops->add_option("--batches", batches, "random input batches to run");
  ops->add_option("--batch-size", batch_size, "rows per batch");
  ops->add_option("--seed", ops_seed, "seed for the random inputs");
  auto* ops_params = ops->add_option("--params", rate_params, "P for the compression-rate formula");
  auto* ops_layers = ops->add_option("--layers", rate_layers, "L for the compression-rate formula");
  ops->add_option("-b,--bits", bits, "bits for the compression-rate formula")->check(CLI::Range(1, 8));
  ops_params->needs(ops_layers);
  ops_layers->needs(ops_params);
  ops_model->excludes(ops_params);

  auto* preset = app.add_subcommand("config", "print a figure preset as a config file");
  preset->add_option("-f,--figure", figure, "4..7")->check(CLI::Range(4, 7));
  preset->add_option("-s,--scale", scale, "desk or full")->check(CLI::IsMember({"desk", "full"}));

  double snr_db = 10.0;
  std::size_t blocks = 1000;
  std::string data_path;
  bool csv = false;
  auto* data = app.add_subcommand("dataset", "write generated link blocks to a file");
  data->add_option("-c,--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  data->add_option("--snr", snr_db, "SNR in dB");
  data->add_option("-n,--blocks", blocks, "number of blocks");
  data->add_option("-o,--out", data_path, "output file")->required();
  data->add_flag("--csv", csv, "CSV instead of the binary format");
  data->add_option("--seed", seed, "override the master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) {
      const auto cfg = resolve(config_path, seed);
      harness::write_config(out_dir, cfg);
      const auto res = harness::train_full(cfg, log_epoch);
      harness::write_train_outputs(out_dir, cfg, res);
      return kExitOk;
    }
    if (*comp) {
      const auto cfg = resolve(config_path, seed);
      const auto net = nn::load_checkpoint(checkpoint);
      if (net.input_shape() != cfg.link.input_shape()) {
        throw harness::ConfigError("checkpoint input " + nn::shape_to_string(net.input_shape()) +
                                   " does not match the configured link");
      }
      harness::write_config(out_dir, cfg);
      const auto res = method == "lc" ? harness::compress_lc(net, cfg, bits) : harness::compress_post(net, cfg, bits);
      for (const auto& r : res.trace) {
        std::cerr << "lc epoch " << r.epoch << " loss " << std::setprecision(6) << r.loss << " distance "
                  << r.distance << " mu " << r.mu << '\n';
      }
      harness::write_compress_outputs(out_dir, cfg, res);
      std::cout << harness::to_json(res.report).dump(2) << '\n';
      return kExitOk;
    }
    if (*sweep) {
      const auto cfg = resolve(config_path, seed);
      harness::ModelSet models;
      if (!checkpoint.empty()) models.full = nn::load_checkpoint(checkpoint);
      for (const auto& spec : model_paths) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw harness::ConfigError("--model expects TAG=PATH, got '" + spec + "'");
        const auto tag = harness::ReceiverTag::parse(spec.substr(0, eq));
        if (tag.kind != harness::ReceiverTag::Kind::kCnnLc && tag.kind != harness::ReceiverTag::Kind::kCnnPost) {
          throw harness::ConfigError("--model takes compressed receiver tags, got '" + spec.substr(0, eq) + "'");
        }
        auto model = compress::load_model(spec.substr(eq + 1));
        auto& pool = tag.kind == harness::ReceiverTag::Kind::kCnnLc ? models.lc : models.post;
        pool.insert_or_assign(tag.bits, std::move(model));
      }
      const auto receivers = harness::build_receivers(cfg, models);
      std::vector<const rx::Receiver*> ptrs;
      for (const auto& r : receivers) ptrs.push_back(r.get());
      harness::write_config(out_dir, cfg);
      const auto res = harness::run_sweep(cfg, ptrs, print_record);
      harness::write_sweep_outputs(out_dir, cfg, res);
      return finish_sweep(res);
    }
    if (*repro) {
      auto cfg = config_path.empty() ? harness::figure_preset(figure, harness::scale_from_string(scale))
                                     : harness::load_config(config_path);
      if (seed) cfg.seed = *seed;
      const auto res = harness::reproduce(cfg, out_dir, &std::cerr);
      return finish_sweep(res.sweep);
    }
    if (*insp) {
      std::cout << inspect(model_path).dump(2) << '\n';
      return kExitOk;
    }
    if (*ops) {
      if (!model_path.empty()) {
        std::cout << report_ops(model_path, batches, batch_size, ops_seed).dump(2) << '\n';
      } else if (rate_params > 0) {
        std::cout << json{{"params", rate_params},
                          {"layers", rate_layers},
                          {"bits", bits},
                          {"compression_rate", compress::compression_rate(rate_params, rate_layers, bits)}}
                         .dump(2)
                  << '\n';
      } else {
        throw harness::ConfigError("report-ops needs --model, or --params and --layers");
      }
      return kExitOk;
    }
    if (*preset) {
      std::cout << harness::to_json(harness::figure_preset(figure, harness::scale_from_string(scale))).dump(2)
                << '\n';
      return kExitOk;
    }
    if (*data) {
      const auto cfg = resolve(config_path, seed);
      channel::DatasetStream stream(cfg.link, {snr_db}, harness::Seeds::from(cfg.seed).eval,
                                    channel::DatasetStream::Mode::kFixed);
      std::vector<channel::LinkSample> samples;
      samples.reserve(blocks);
      for (std::size_t k = 0; k < blocks; ++k) samples.push_back(stream.next());
      std::ofstream out(data_path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write '" + data_path + "'");
      if (csv) {
        channel::write_dataset_csv(out, cfg.link, samples);
      } else {
        channel::write_dataset(out, cfg.link, samples);
      }
      if (!out) throw std::runtime_error("write failed for '" + data_path + "'");
      return kExitOk;
    }
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nn::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
