#include "fsolc/harness/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#ifndef FSOLC_VERSION
#define FSOLC_VERSION "0.0.0"
#endif

namespace fsolc::harness {

using nlohmann::json;

std::string version_string() { return std::string("fsolc ") + FSOLC_VERSION; }

ReceiverTag ReceiverTag::parse(const std::string& tag) {
  if (tag == "cnn_full") return {Kind::kCnnFull, 0};
  if (tag == "ml_perfect_csi") return {Kind::kMlPerfect, 0};
  if (tag == "ml_imperfect_csi") return {Kind::kMlImperfect, 0};
  for (auto [prefix, kind] : {std::pair{"cnn_lc_", Kind::kCnnLc}, std::pair{"cnn_post_", Kind::kCnnPost}}) {
    const std::string p = prefix;
    if (tag.rfind(p, 0) == 0 && tag.size() > p.size() + 3 && tag.ends_with("bit")) {
      const std::string digits = tag.substr(p.size(), tag.size() - p.size() - 3);
      if (digits.size() == 1 && digits[0] >= '1' && digits[0] <= '8') return {kind, digits[0] - '0'};
    }
  }
  throw ConfigError("unknown receiver '" + tag +
                    "' (expected cnn_full, cnn_lc_<b>bit, cnn_post_<b>bit, ml_perfect_csi or "
                    "ml_imperfect_csi with b in 1..8)");
}

std::string ReceiverTag::str() const {
  switch (kind) {
    case Kind::kCnnFull: return "cnn_full";
    case Kind::kCnnLc: return "cnn_lc_" + std::to_string(bits) + "bit";
    case Kind::kCnnPost: return "cnn_post_" + std::to_string(bits) + "bit";
    case Kind::kMlPerfect: return "ml_perfect_csi";
    case Kind::kMlImperfect: return "ml_imperfect_csi";
  }
  return "?";
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void check_grid(const std::vector<double>& grid, const std::string& what) {
  require(!grid.empty(), what + " must not be empty");
  for (double v : grid) require(std::isfinite(v), what + " entries must be finite");
}

std::vector<int> bits_of(const std::vector<std::string>& receivers, ReceiverTag::Kind kind) {
  std::set<int> out;
  for (const auto& r : receivers) {
    const auto t = ReceiverTag::parse(r);
    if (t.kind == kind) out.insert(t.bits);
  }
  return {out.begin(), out.end()};
}

}  // namespace

void ExperimentConfig::validate() const {
  require(!name.empty(), "name must not be empty");
  try {
    link.validate();
    csi.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (rytov_var) require(*rytov_var > 0.0 && std::isfinite(*rytov_var), "channel.rytov must be positive");
  require(network.kernel >= 1, "network.kernel must be at least 1");
  require(!network.filters.empty(), "network.filters must not be empty");
  for (auto f : network.filters) require(f >= 1, "network.filters entries must be positive");
  require(train.batch_size >= 1, "train.batch_size must be at least 1");
  require(train.epochs == 0 || train.epoch_size >= 1, "train.epoch_size must be at least 1");
  require(train.learning_rate > 0.0, "train.learning_rate must be positive");
  check_grid(train.snr_db, "train.snr_db");
  check_grid(sweep.snr_db, "sweep.snr_db");
  require(sweep.max_symbols >= sweep.min_symbols, "sweep.max_symbols must be >= sweep.min_symbols");
  require(sweep.max_symbols >= 1, "sweep.max_symbols must be positive");
  require(sweep.chunk_blocks >= 1, "sweep.chunk_blocks must be at least 1");
  if (!sweep.fixed_channel.empty()) {
    require(sweep.fixed_channel.size() == link.receive_antennas(),
            "sweep.fixed_channel needs one gain per receive antenna");
    for (double h : sweep.fixed_channel) require(h > 0.0 && std::isfinite(h), "sweep.fixed_channel gains must be positive");
  }
  require(!receivers.empty(), "receivers must list at least one receiver");
  std::set<std::string> seen;
  for (const auto& r : receivers) {
    ReceiverTag::parse(r);
    require(seen.insert(r).second, "receiver '" + r + "' listed twice");
  }
  for (int b : lc_bits()) {
    try {
      lc_config(b).validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("compress: ") + e.what());
    }
  }
  require(compress.range.min <= compress.range.max, "compress.exponent_range is empty");
}

std::vector<int> ExperimentConfig::lc_bits() const { return bits_of(receivers, ReceiverTag::Kind::kCnnLc); }
std::vector<int> ExperimentConfig::post_bits() const {
  return bits_of(receivers, ReceiverTag::Kind::kCnnPost);
}

compress::LcConfig ExperimentConfig::lc_config(int bits) const {
  compress::LcConfig c;
  c.bits = bits;
  c.a = compress.a;
  c.mu0 = compress.mu0;
  c.epochs = compress.epochs;
  c.epoch_size = compress.epoch_size;
  c.batch_size = train.batch_size;
  c.schedule = compress.schedule;
  c.codebook.range = compress.range;
  return c;
}

json to_json(const ExperimentConfig& cfg) {
  json channel_j;
  if (cfg.rytov_var) {
    channel_j = {{"rytov", *cfg.rytov_var}};
  } else {
    channel_j = {{"alpha", cfg.link.turbulence.alpha}, {"beta", cfg.link.turbulence.beta}};
  }
  json sweep_j = {{"snr_db", cfg.sweep.snr_db},
                  {"min_symbols", cfg.sweep.min_symbols},
                  {"max_symbols", cfg.sweep.max_symbols},
                  {"min_errors", cfg.sweep.min_errors},
                  {"chunk_blocks", cfg.sweep.chunk_blocks},
                  {"shift_add", cfg.sweep.shift_add}};
  if (!cfg.sweep.fixed_channel.empty()) sweep_j["fixed_channel"] = cfg.sweep.fixed_channel;
  return {
      {"schema", "fsolc-experiment/1"},
      {"name", cfg.name},
      {"seed", cfg.seed},
      {"system", std::string(channel::to_string(cfg.link.system))},
      {"channel", channel_j},
      {"link", {{"L", cfg.link.block_len}, {"M", cfg.link.antennas}}},
      {"network", {{"kernel", cfg.network.kernel}, {"filters", cfg.network.filters}}},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"epoch_size", cfg.train.epoch_size},
        {"batch_size", cfg.train.batch_size},
        {"learning_rate", cfg.train.learning_rate},
        {"snr_db", cfg.train.snr_db}}},
      {"compress",
       {{"a", cfg.compress.a},
        {"mu0", cfg.compress.mu0},
        {"epochs", cfg.compress.epochs},
        {"epoch_size", cfg.compress.epoch_size},
        {"mu_schedule", compress::to_string(cfg.compress.schedule)},
        {"exponent_range", {cfg.compress.range.min, cfg.compress.range.max}}}},
      {"sweep", sweep_j},
      {"csi", {{"error_std", cfg.csi.error_std}, {"mode", "multiplicative"}}},
      {"receivers", cfg.receivers},
  };
}

namespace {

// Reads keys from one JSON object and rejects any it did not consume.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j.is_object(), where() + " must be an object");
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }
  bool has(const char* key) const { return j_.contains(key); }
  Reader child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, path_.empty() ? key : path_ + "." + key);
  }
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      require(seen_.count(k) > 0, "unknown key '" + where(k.c_str()) + "'");
    }
  }
  std::string where(const char* key = nullptr) const {
    if (!key) return path_.empty() ? "config" : path_;
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  Reader root(j, "");
  std::string schema = "fsolc-experiment/1";
  root.get("schema", schema);
  require(schema == "fsolc-experiment/1", "unsupported config schema '" + schema + "'");
  root.get("name", cfg.name);
  root.get("seed", cfg.seed);
  std::string system = std::string(channel::to_string(cfg.link.system));
  root.get("system", system);
  try {
    cfg.link.system = channel::system_from_string(system);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  {
    auto c = root.child("channel");
    if (c.has("rytov")) {
      require(!c.has("alpha") && !c.has("beta"), "channel takes either rytov or alpha/beta, not both");
      double r = 0.0;
      c.get("rytov", r);
      require(r > 0.0 && std::isfinite(r), "channel.rytov must be positive");
      cfg.rytov_var = r;
      cfg.link.turbulence = channel::alpha_beta_from_rytov(r);
    } else {
      c.get("alpha", cfg.link.turbulence.alpha);
      c.get("beta", cfg.link.turbulence.beta);
    }
    c.finish();
  }
  {
    auto l = root.child("link");
    l.get("L", cfg.link.block_len);
    l.get("M", cfg.link.antennas);
    l.finish();
  }
  {
    auto n = root.child("network");
    n.get("kernel", cfg.network.kernel);
    n.get("filters", cfg.network.filters);
    n.finish();
  }
  {
    auto t = root.child("train");
    t.get("epochs", cfg.train.epochs);
    t.get("epoch_size", cfg.train.epoch_size);
    t.get("batch_size", cfg.train.batch_size);
    t.get("learning_rate", cfg.train.learning_rate);
    t.get("snr_db", cfg.train.snr_db);
    t.finish();
  }
  {
    auto c = root.child("compress");
    c.get("a", cfg.compress.a);
    c.get("mu0", cfg.compress.mu0);
    c.get("epochs", cfg.compress.epochs);
    c.get("epoch_size", cfg.compress.epoch_size);
    std::string sched = compress::to_string(cfg.compress.schedule);
    c.get("mu_schedule", sched);
    try {
      cfg.compress.schedule = compress::mu_schedule_from_string(sched);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    std::vector<int> range{cfg.compress.range.min, cfg.compress.range.max};
    c.get("exponent_range", range);
    require(range.size() == 2, "compress.exponent_range must be [min, max]");
    cfg.compress.range = {range[0], range[1]};
    c.finish();
  }
  {
    auto s = root.child("sweep");
    s.get("snr_db", cfg.sweep.snr_db);
    s.get("min_symbols", cfg.sweep.min_symbols);
    s.get("max_symbols", cfg.sweep.max_symbols);
    s.get("min_errors", cfg.sweep.min_errors);
    s.get("chunk_blocks", cfg.sweep.chunk_blocks);
    s.get("shift_add", cfg.sweep.shift_add);
    s.get("fixed_channel", cfg.sweep.fixed_channel);
    s.finish();
  }
  {
    auto c = root.child("csi");
    c.get("error_std", cfg.csi.error_std);
    std::string mode = "multiplicative";
    c.get("mode", mode);
    require(mode == "multiplicative", "csi.mode must be 'multiplicative'");
    c.finish();
  }
  root.get("receivers", cfg.receivers);
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Scale scale_from_string(const std::string& s) {
  if (s == "desk") return Scale::kDesk;
  if (s == "full") return Scale::kFull;
  throw ConfigError("unknown scale '" + s + "' (expected desk or full)");
}

std::string to_string(Scale s) { return s == Scale::kDesk ? "desk" : "full"; }

namespace {

std::vector<double> range_grid(double lo, double hi, double step) {
  std::vector<double> g;
  for (int k = 0; lo + k * step <= hi + 1e-9; ++k) g.push_back(lo + k * step);
  return g;
}

}  // namespace

ExperimentConfig figure_preset(int figure, Scale scale) {
  require(figure >= 4 && figure <= 7, "figure must be 4, 5, 6 or 7");
  ExperimentConfig cfg;
  const bool simo = figure >= 6;
  const int bits = figure % 2 == 0 ? 1 : 2;
  cfg.name = "figure" + std::to_string(figure) + "_" + to_string(scale);
  cfg.link = {simo ? channel::System::kSimo : channel::System::kSiso, 10, 8, {4.0, 1.9}};
  if (simo) {
    cfg.train.snr_db = range_grid(-10.0, 14.0, 2.0);
    cfg.sweep.snr_db = range_grid(-10.0, 10.0, 4.0);
  } else {
    cfg.train.snr_db = range_grid(0.0, 30.0, 2.0);
    cfg.sweep.snr_db = range_grid(0.0, 30.0, 5.0);
  }
  const std::size_t epochs = scale == Scale::kDesk ? 10 : 30;
  const std::size_t epoch_size = scale == Scale::kDesk ? 10000 : 30000;
  cfg.train.epochs = cfg.compress.epochs = epochs;
  cfg.train.epoch_size = cfg.compress.epoch_size = epoch_size;
  const std::string b = std::to_string(bits);
  cfg.receivers = {"ml_perfect_csi", "ml_imperfect_csi", "cnn_full", "cnn_lc_" + b + "bit",
                   "cnn_post_" + b + "bit"};
  cfg.validate();
  return cfg;
}

std::uint64_t Seeds::lc_data(int bits) const {
  return channel::mix_seed(train_data ^ (0x1c00u + static_cast<unsigned>(bits)));
}

Seeds Seeds::from(std::uint64_t master) {
  const std::uint64_t m = channel::mix_seed(master);
  return {channel::mix_seed(m ^ 1), channel::mix_seed(m ^ 2), channel::mix_seed(m ^ 3)};
}

}  // namespace fsolc::harness
