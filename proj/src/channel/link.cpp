#include "fsolc/channel/link.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "fsolc/nn/serialize.hpp"

namespace fsolc::channel {

std::string_view to_string(System system) {
  return system == System::kSiso ? "SISO" : "SIMO";
}

System system_from_string(std::string_view name) {
  if (name == "SISO" || name == "siso") return System::kSiso;
  if (name == "SIMO" || name == "simo") return System::kSimo;
  throw std::invalid_argument("unknown system '" + std::string(name) + "' (expected SISO or SIMO)");
}

std::vector<std::size_t> LinkConfig::input_shape() const {
  if (system == System::kSiso) return {block_len};
  return {antennas, block_len};
}

void LinkConfig::validate() const {
  if (block_len == 0) throw std::invalid_argument("link: L must be at least 1");
  if (system == System::kSimo && antennas == 0) {
    throw std::invalid_argument("link: M must be at least 1");
  }
  turbulence.validate();
}

double noise_sigma(double snr_db) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("noise_sigma: SNR must be finite");
  return std::pow(10.0, -snr_db / 20.0);
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t block_seed(std::uint64_t master, std::uint64_t block) {
  return mix_seed(mix_seed(master) ^ block);
}

namespace {

void fill_block(const LinkConfig& cfg, LinkSample& out, std::mt19937_64& rng) {
  const std::size_t m = cfg.receive_antennas(), len = cfg.block_len;
  out.s.resize(len);
  for (auto& bit : out.s) bit = static_cast<std::uint8_t>(rng() >> 63);
  std::normal_distribution<double> noise(0.0, out.sigma);
  out.x.resize(m * len);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t l = 0; l < len; ++l) {
      out.x[a * len + l] = out.h[a] * out.s[l] + noise(rng);
    }
  }
}

LinkSample block_header(double snr_db, std::uint64_t seed, std::uint64_t block) {
  LinkSample out;
  out.block = block;
  out.seed = seed;
  out.snr_db = snr_db;
  out.sigma = noise_sigma(snr_db);
  return out;
}

}  // namespace

LinkSample generate_block(const LinkConfig& cfg, double snr_db, std::uint64_t seed,
                          std::uint64_t block) {
  cfg.validate();
  LinkSample out = block_header(snr_db, seed, block);
  std::mt19937_64 rng(seed);
  out.h = sample_channel(cfg.turbulence, cfg.receive_antennas(), rng);
  fill_block(cfg, out, rng);
  return out;
}

LinkSample generate_block_with_channel(const LinkConfig& cfg, std::vector<double> h,
                                       double snr_db, std::uint64_t seed, std::uint64_t block) {
  cfg.validate();
  if (h.size() != cfg.receive_antennas()) {
    throw std::invalid_argument("generate_block_with_channel: need one gain per antenna");
  }
  for (double v : h) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("channel gains must be positive");
  }
  LinkSample out = block_header(snr_db, seed, block);
  out.h = std::move(h);
  std::mt19937_64 rng(seed);
  fill_block(cfg, out, rng);
  return out;
}

DatasetStream::DatasetStream(LinkConfig cfg, std::vector<double> snr_grid_db,
                             std::uint64_t master_seed, Mode mode, std::uint64_t first_block)
    : cfg_(cfg), grid_(std::move(snr_grid_db)), master_(master_seed), mode_(mode),
      next_(first_block) {
  cfg_.validate();
  if (grid_.empty()) throw std::invalid_argument("dataset: empty SNR grid");
  if (mode_ == Mode::kFixed && grid_.size() != 1) {
    throw std::invalid_argument("dataset: fixed mode takes exactly one SNR point");
  }
}

LinkSample DatasetStream::at(std::uint64_t index) const {
  const std::uint64_t seed = block_seed(master_, index);
  double snr = grid_.front();
  if (mode_ == Mode::kTraining && grid_.size() > 1) {
    // independent of the block's own generator
    std::mt19937_64 pick(mix_seed(seed ^ 0x5352u));
    snr = grid_[std::uniform_int_distribution<std::size_t>(0, grid_.size() - 1)(pick)];
  }
  return generate_block(cfg_, snr, seed, index);
}

LinkSample DatasetStream::next() { return at(next_++); }

nn::Batch make_batch(const LinkConfig& cfg, const std::vector<LinkSample>& blocks) {
  const std::size_t len = cfg.block_len, width = cfg.receive_antennas() * len;
  nn::Shape in_shape{blocks.size()};
  for (auto d : cfg.input_shape()) in_shape.push_back(d);
  nn::Batch batch{nn::Tensor(in_shape), nn::Tensor({blocks.size(), len})};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    if (blk.x.size() != width || blk.s.size() != len) {
      throw nn::ShapeError("make_batch: block " + std::to_string(blk.block) +
                           " does not match the link configuration");
    }
    std::copy(blk.x.begin(), blk.x.end(), batch.inputs.data() + b * width);
    for (std::size_t l = 0; l < len; ++l) batch.targets[b * len + l] = blk.s[l];
  }
  return batch;
}

nn::Batch LinkBatchSource::next(std::size_t batch_size) {
  std::vector<LinkSample> blocks;
  blocks.reserve(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) blocks.push_back(stream_.next());
  return make_batch(stream_.config(), blocks);
}

namespace {
constexpr char kMagic[4] = {'F', 'S', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void write_dataset(std::ostream& out, const LinkConfig& cfg,
                   const std::vector<LinkSample>& blocks) {
  cfg.validate();
  const std::size_t m = cfg.receive_antennas(), len = cfg.block_len;
  nn::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.u8(static_cast<std::uint8_t>(cfg.system));
  w.u32(static_cast<std::uint32_t>(len));
  w.u32(static_cast<std::uint32_t>(m));
  w.f64(cfg.turbulence.alpha);
  w.f64(cfg.turbulence.beta);
  w.u64(blocks.size());
  for (const auto& b : blocks) {
    if (b.h.size() != m || b.s.size() != len || b.x.size() != m * len) {
      throw nn::ShapeError("write_dataset: block " + std::to_string(b.block) +
                           " does not match the link configuration");
    }
    w.u64(b.block);
    w.u64(b.seed);
    w.f64(b.snr_db);
    w.f64(b.sigma);
    for (double v : b.h) w.f64(v);
    for (auto v : b.s) w.u8(v);
    for (double v : b.x) w.f64(v);
  }
  const auto& buf = w.buffer();
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write_dataset: stream write failed");
}

std::vector<LinkSample> read_dataset(std::istream& in, LinkConfig* cfg_out) {
  const auto data = nn::read_all(in);
  nn::ByteReader r(data);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw nn::FormatError("dataset: bad magic");
  if (const auto v = r.u16(); v != kVersion) {
    throw nn::FormatError("dataset: unsupported version " + std::to_string(v));
  }
  LinkConfig cfg;
  const auto sys = r.u8();
  if (sys > 1) throw nn::FormatError("dataset: unknown system tag");
  cfg.system = static_cast<System>(sys);
  cfg.block_len = r.u32();
  cfg.antennas = r.u32();
  cfg.turbulence = {r.f64(), r.f64()};
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw nn::FormatError(std::string("dataset: ") + e.what());
  }
  const std::size_t m = cfg.antennas, len = cfg.block_len;
  if (cfg.system == System::kSiso && m != 1) throw nn::FormatError("dataset: SISO with M != 1");
  const auto count = r.u64();
  const std::size_t record = 32 + 8 * m + len + 8 * m * len;
  if (count > data.size() / record) throw nn::FormatError("dataset: record count exceeds data");
  std::vector<LinkSample> blocks(count);
  for (auto& b : blocks) {
    b.block = r.u64();
    b.seed = r.u64();
    b.snr_db = r.f64();
    b.sigma = r.f64();
    b.h.resize(m);
    for (auto& v : b.h) v = r.f64();
    b.s.resize(len);
    for (auto& v : b.s) {
      v = r.u8();
      if (v > 1) throw nn::FormatError("dataset: bit value out of range");
    }
    b.x.resize(m * len);
    for (auto& v : b.x) v = r.f64();
  }
  if (!r.done()) throw nn::FormatError("dataset: trailing bytes");
  if (cfg_out) *cfg_out = cfg;
  return blocks;
}

void write_dataset_csv(std::ostream& out, const LinkConfig& cfg,
                       const std::vector<LinkSample>& blocks) {
  const std::size_t m = cfg.receive_antennas(), len = cfg.block_len;
  out << "block,seed,snr_db,sigma";
  for (std::size_t k = 0; k < m; ++k) out << ",h" << k;
  for (std::size_t k = 0; k < len; ++k) out << ",s" << k;
  for (std::size_t k = 0; k < m * len; ++k) out << ",x" << k;
  out << '\n' << std::setprecision(17);
  for (const auto& b : blocks) {
    out << b.block << ',' << b.seed << ',' << b.snr_db << ',' << b.sigma;
    for (double v : b.h) out << ',' << v;
    for (auto v : b.s) out << ',' << int(v);
    for (double v : b.x) out << ',' << v;
    out << '\n';
  }
}

}  // namespace fsolc::channel
