#include "fsolc/harness/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <istream>
#include <sstream>
#include <thread>

namespace fsolc::harness {

Interval wilson_interval(std::uint64_t errors, std::uint64_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(errors) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z / (1 + z2 / n) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double standard_error(const BerRecord& r) {
  if (r.symbols == 0) return 0.0;
  return std::sqrt(r.ber * (1.0 - r.ber) / static_cast<double>(r.symbols));
}

unsigned thread_count() {
  if (const char* env = std::getenv("FSOLC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<unsigned>(v);
    throw ConfigError(std::string("FSOLC_THREADS must be an integer in 1..1024, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::uint64_t point_seed(const ExperimentConfig& cfg, std::size_t point) {
  return channel::mix_seed(Seeds::from(cfg.seed).eval ^ (0x9000u + point));
}

namespace {

// Runs fn(slice, begin, end) over [0, n) split into `threads` contiguous
// slices.
template <typename Fn>
void parallel_slices(std::size_t n, unsigned threads, Fn&& fn) {
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    fn(0u, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        fn(t, n * t / threads, n * (t + 1) / threads);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Progress {
  std::uint64_t symbols = 0, errors = 0;
  bool done = false;
};

}  // namespace

SweepResult run_sweep(const ExperimentConfig& cfg, const std::vector<const rx::Receiver*>& receivers,
                      const RecordSink& sink, unsigned threads) {
  cfg.validate();
  if (receivers.empty()) throw ConfigError("sweep needs at least one receiver");
  if (threads == 0) threads = thread_count();
  const auto& sw = cfg.sweep;
  const std::size_t len = cfg.link.block_len;
  const std::string hash = config_hash(cfg);
  SweepResult result;

  for (std::size_t p = 0; p < sw.snr_db.size(); ++p) {
    const double snr = sw.snr_db[p];
    const std::uint64_t master = point_seed(cfg, p);
    const channel::DatasetStream stream(cfg.link, {snr}, master, channel::DatasetStream::Mode::kFixed);
    std::vector<Progress> prog(receivers.size());
    std::uint64_t next_block = 0;
    const std::uint64_t max_blocks = (sw.max_symbols + len - 1) / len;

    while (std::any_of(prog.begin(), prog.end(), [](const Progress& g) { return !g.done; })) {
      const std::size_t count = static_cast<std::size_t>(
          std::min<std::uint64_t>(sw.chunk_blocks, max_blocks - next_block));
      std::vector<channel::LinkSample> blocks(count);
      parallel_slices(count, threads, [&](unsigned, std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) {
          const std::uint64_t idx = next_block + k;
          blocks[k] = sw.fixed_channel.empty()
                          ? stream.at(idx)
                          : channel::generate_block_with_channel(cfg.link, sw.fixed_channel, snr,
                                                                 channel::block_seed(master, idx), idx);
        }
      });
      next_block += count;

      for (std::size_t r = 0; r < receivers.size(); ++r) {
        auto& g = prog[r];
        if (g.done) continue;
        std::vector<std::uint64_t> errs(threads, 0);
        parallel_slices(count, threads, [&](unsigned t, std::size_t b, std::size_t e) {
          const std::vector<channel::LinkSample> part(blocks.begin() + b, blocks.begin() + e);
          const auto bits = receivers[r]->detect(cfg.link, part);
          std::uint64_t n = 0;
          for (std::size_t k = 0; k < part.size(); ++k) {
            for (std::size_t l = 0; l < len; ++l) n += bits[k * len + l] != part[k].s[l];
          }
          errs[t] += n;
        });
        for (auto n : errs) g.errors += n;
        // the final block may overshoot max_symbols by less than one block
        g.symbols = std::min<std::uint64_t>(g.symbols + count * len, sw.max_symbols);
        if ((g.errors >= sw.min_errors && g.symbols >= sw.min_symbols) ||
            g.symbols >= sw.max_symbols || next_block >= max_blocks) {
          g.done = true;
        }
      }
    }

    for (std::size_t r = 0; r < receivers.size(); ++r) {
      BerRecord rec;
      rec.receiver = receivers[r]->tag();
      rec.snr_db = snr;
      rec.symbols = prog[r].symbols;
      rec.errors = prog[r].errors;
      rec.ber = rec.symbols ? static_cast<double>(rec.errors) / rec.symbols : 0.0;
      const auto ci = wilson_interval(rec.errors, rec.symbols);
      rec.ci_low = ci.low;
      rec.ci_high = ci.high;
      rec.low_confidence = rec.errors < sw.min_errors;
      rec.config_hash = hash;
      rec.seed = master;
      result.total_symbols += rec.symbols;
      result.low_confidence += rec.low_confidence;
      if (sink) sink(rec);
      result.records.push_back(std::move(rec));
    }
  }
  return result;
}

std::string csv_row(const BerRecord& r) {
  std::ostringstream out;
  out << std::setprecision(17) << "fsolc-ber/1," << version_string() << ',' << r.config_hash << ','
      << r.receiver << ',' << r.snr_db << ',' << r.symbols << ',' << r.errors << ',' << r.ber << ','
      << r.ci_low << ',' << r.ci_high << ',' << (r.low_confidence ? 1 : 0) << ',' << r.seed;
  return out.str();
}

nlohmann::json to_json(const BerRecord& r) {
  return {{"receiver", r.receiver},   {"snr_db", r.snr_db},   {"symbols", r.symbols},
          {"errors", r.errors},       {"ber", r.ber},         {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},     {"low_confidence", r.low_confidence},
          {"config_hash", r.config_hash}, {"seed", r.seed}};
}

std::vector<BerRecord> read_ber_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kBerCsvHeader) {
    throw std::runtime_error("BER CSV: missing or unexpected header");
  }
  std::vector<BerRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 12) throw std::runtime_error("BER CSV line " + std::to_string(lineno) + ": expected 12 fields");
    try {
      BerRecord r;
      r.config_hash = f[2];
      r.receiver = f[3];
      r.snr_db = std::stod(f[4]);
      r.symbols = std::stoull(f[5]);
      r.errors = std::stoull(f[6]);
      r.ber = std::stod(f[7]);
      r.ci_low = std::stod(f[8]);
      r.ci_high = std::stod(f[9]);
      r.low_confidence = f[10] == "1";
      r.seed = std::stoull(f[11]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw std::runtime_error("BER CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

}  // namespace fsolc::harness
