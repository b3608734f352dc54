#include "fsolc/compress/quantized_model.hpp"

#include <fstream>
#include <stdexcept>

#include "fsolc/nn/serialize.hpp"

namespace fsolc::compress {
namespace {

constexpr char kModelMagic[4] = {'F', 'S', 'Q', 'M'};
constexpr std::uint16_t kModelVersion = 1;

enum LevelFlags : std::uint8_t {
  kZero = 1,
  kSingle = 2,
  kFNegative = 4,
  kGNegative = 8,
};

int index_width(int bits) { return bits + 1; }

}  // namespace

std::vector<nn::Tensor> QuantizedModel::decode() const {
  std::vector<nn::Tensor> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) {
    if (t.quantized) {
      out.push_back(decode_indices(t.codebook, t.shape, t.indices));
    } else {
      out.emplace_back(t.shape, t.raw);
    }
  }
  return out;
}

nn::Network QuantizedModel::to_network() const {
  nn::Network net(input_shape, layers);
  if (net.params().size() != tensors.size()) {
    throw std::invalid_argument("model has " + std::to_string(tensors.size()) +
                                " tensors, architecture needs " +
                                std::to_string(net.params().size()));
  }
  auto decoded = decode();
  for (std::size_t p = 0; p < decoded.size(); ++p) {
    if (decoded[p].shape() != net.params()[p].shape()) {
      throw nn::ShapeError("tensor " + tensors[p].name + " has shape " +
                           nn::shape_to_string(decoded[p].shape()) + ", expected " +
                           nn::shape_to_string(net.params()[p].shape()));
    }
    net.params()[p] = std::move(decoded[p]);
    net.set_quantizable(p, tensors[p].quantized);
  }
  return net;
}

std::size_t QuantizedModel::quantized_parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.quantized ? t.indices.size() : 0;
  return n;
}

std::size_t QuantizedModel::raw_parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.quantized ? 0 : t.raw.size();
  return n;
}

std::size_t QuantizedModel::quantized_tensor_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.quantized ? 1 : 0;
  return n;
}

std::size_t QuantizedModel::pruned_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) {
    if (!t.quantized) continue;
    for (auto k : t.indices) n += k == t.codebook.zero_index ? 1 : 0;
  }
  return n;
}

void QuantizedModel::validate() const {
  if (bits < 1 || bits > 8) throw std::invalid_argument("model: bits out of range");
  for (const auto& t : tensors) {
    const std::size_t n = nn::shape_size(t.shape);
    if (t.quantized) {
      t.codebook.validate();
      if (t.codebook.bits != bits) {
        throw std::invalid_argument("model: tensor " + t.name + " codebook has different bits");
      }
      if (t.indices.size() != n) {
        throw std::invalid_argument("model: tensor " + t.name + " index count mismatch");
      }
      for (auto k : t.indices) {
        if (k >= t.codebook.size()) {
          throw std::invalid_argument("model: tensor " + t.name + " index " + std::to_string(k) +
                                      " addresses no level");
        }
      }
    } else if (t.raw.size() != n) {
      throw std::invalid_argument("model: tensor " + t.name + " value count mismatch");
    }
  }
}

QuantizedModel assemble_model(const nn::Network& net, int bits,
                              const std::vector<std::size_t>& params,
                              const std::vector<LayerCodebook>& codebooks,
                              const std::vector<std::vector<std::uint32_t>>& indices) {
  if (codebooks.size() != params.size() || indices.size() != params.size()) {
    throw std::invalid_argument("assemble_model: params, codebooks and indices differ in length");
  }
  QuantizedModel m;
  m.bits = bits;
  m.input_shape = net.input_shape();
  m.layers = net.layers();
  for (std::size_t p = 0; p < net.params().size(); ++p) {
    ModelTensor t;
    t.name = net.param_info()[p].name;
    t.shape = net.params()[p].shape();
    t.raw.assign(net.params()[p].values().begin(), net.params()[p].values().end());
    m.tensors.push_back(std::move(t));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    ModelTensor& t = m.tensors.at(params[k]);
    t.quantized = true;
    t.raw.clear();
    t.codebook = codebooks[k];
    t.indices = indices[k];
  }
  m.validate();
  return m;
}

std::vector<std::uint8_t> pack_indices(const std::vector<std::uint32_t>& indices, int width) {
  if (width < 1 || width > 32) throw std::invalid_argument("pack_indices: bad width");
  std::vector<std::uint8_t> out((indices.size() * static_cast<std::size_t>(width) + 7) / 8, 0);
  std::size_t bit = 0;
  for (std::uint32_t v : indices) {
    if (width < 32 && (v >> width) != 0) {
      throw std::invalid_argument("pack_indices: index " + std::to_string(v) + " wider than " +
                                  std::to_string(width) + " bits");
    }
    for (int b = 0; b < width; ++b, ++bit) {
      if ((v >> b) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    }
  }
  return out;
}

std::vector<std::uint32_t> unpack_indices(const std::vector<std::uint8_t>& bytes,
                                          std::size_t count, int width) {
  if (width < 1 || width > 32) throw std::invalid_argument("unpack_indices: bad width");
  if (bytes.size() * 8 < count * static_cast<std::size_t>(width)) {
    throw nn::FormatError("index stream too short");
  }
  std::vector<std::uint32_t> out(count, 0);
  std::size_t bit = 0;
  for (auto& v : out) {
    for (int b = 0; b < width; ++b, ++bit) {
      if ((bytes[bit / 8] >> (bit % 8)) & 1u) v |= 1u << b;
    }
  }
  return out;
}

void write_model(std::ostream& out, const QuantizedModel& model) {
  model.validate();
  nn::ByteWriter w;
  w.bytes(kModelMagic, 4);
  w.u16(kModelVersion);
  w.u8(static_cast<std::uint8_t>(model.bits));
  nn::write_architecture(w, model.input_shape, model.layers);
  w.u32(static_cast<std::uint32_t>(model.tensors.size()));
  for (const auto& t : model.tensors) {
    w.str(t.name);
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.u8(t.quantized ? 1 : 0);
    if (t.quantized) {
      w.u8(t.codebook.degenerate ? 1 : 0);
      w.u8(static_cast<std::uint8_t>(t.codebook.size()));
      for (const auto& lv : t.codebook.levels) {
        if (!lv.pow2) {
          w.u8(kZero);
          w.i8(0);
          w.i8(0);
          continue;
        }
        const Pow2Level& p = *lv.pow2;
        std::uint8_t flags = 0;
        if (p.single) flags |= kSingle;
        if (p.f < 0) flags |= kFNegative;
        if (p.g < 0) flags |= kGNegative;
        w.u8(flags);
        w.i8(static_cast<std::int8_t>(p.i));
        w.i8(static_cast<std::int8_t>(p.j));
      }
      const auto packed = pack_indices(t.indices, index_width(model.bits));
      w.u64(t.indices.size());
      w.bytes(packed.data(), packed.size());
    } else {
      w.u64(t.raw.size());
      for (double v : t.raw) w.f64(v);
    }
  }
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw std::runtime_error("model write failed");
}

QuantizedModel read_model(std::istream& in) {
  nn::ByteReader r(nn::read_all(in));
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kModelMagic)) {
    throw nn::FormatError("not a quantized model (bad magic)");
  }
  const std::uint16_t version = r.u16();
  if (version != kModelVersion) {
    throw nn::FormatError("unsupported model version " + std::to_string(version));
  }
  QuantizedModel m;
  m.bits = r.u8();
  if (m.bits < 1 || m.bits > 8) throw nn::FormatError("model bits out of range");
  nn::read_architecture(r, m.input_shape, m.layers);
  m.tensors.resize(r.u32());
  for (auto& t : m.tensors) {
    t.name = r.str();
    t.shape.assign(r.u8(), 0);
    for (auto& d : t.shape) d = r.u32();
    t.quantized = r.u8() != 0;
    if (t.quantized) {
      const bool degenerate = r.u8() != 0;
      std::vector<CodebookLevel> levels(r.u8());
      for (auto& lv : levels) {
        const std::uint8_t flags = r.u8();
        const int i = r.i8();
        const int j = r.i8();
        if (flags & kZero) continue;
        Pow2Level p;
        p.f = (flags & kFNegative) ? -1 : 1;
        p.g = (flags & kGNegative) ? -1 : 1;
        p.i = i;
        p.j = j;
        p.single = (flags & kSingle) != 0;
        lv = {p.value(), p};
      }
      try {
        t.codebook = codebook_from_levels(m.bits, std::move(levels), degenerate);
      } catch (const std::invalid_argument& e) {
        throw nn::FormatError(std::string("tensor ") + t.name + ": " + e.what());
      }
      const std::uint64_t count = r.u64();
      const std::size_t nbytes = (count * index_width(m.bits) + 7) / 8;
      t.indices = unpack_indices(r.bytes(nbytes), count, index_width(m.bits));
    } else {
      t.raw.resize(r.u64());
      for (double& v : t.raw) v = r.f64();
    }
  }
  if (!r.done()) throw nn::FormatError("trailing bytes after model");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw nn::FormatError(e.what());
  }
  return m;
}

void save_model(const std::string& path, const QuantizedModel& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_model(f, model);
}

QuantizedModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open model '" + path + "'");
  return read_model(f);
}

nlohmann::json to_json(const QuantizedModel& model) {
  nlohmann::json j = nn::architecture_to_json(model.input_shape, model.layers);
  j["format"] = "fsolc-quantized-model";
  j["version"] = kModelVersion;
  j["bits"] = model.bits;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : model.tensors) {
    nlohmann::json e{{"name", t.name}, {"shape", t.shape}, {"quantized", t.quantized}};
    if (t.quantized) {
      nlohmann::json levels = nlohmann::json::array();
      for (const auto& lv : t.codebook.levels) {
        if (!lv.pow2) {
          levels.push_back({{"value", 0.0}, {"zero", true}});
          continue;
        }
        const auto& p = *lv.pow2;
        levels.push_back({{"value", lv.value}, {"f", p.f}, {"i", p.i}, {"g", p.g},
                          {"j", p.j}, {"single", p.single}, {"form", p.to_string()}});
      }
      e["codebook"] = {{"degenerate", t.codebook.degenerate}, {"levels", levels}};
      e["indices"] = t.indices;
    } else {
      e["values"] = t.raw;
    }
    tensors.push_back(e);
  }
  j["tensors"] = tensors;
  return j;
}

QuantizedModel model_from_json(const nlohmann::json& j) {
  QuantizedModel m;
  m.bits = j.at("bits").get<int>();
  nn::architecture_from_json(j, m.input_shape, m.layers);
  for (const auto& e : j.at("tensors")) {
    ModelTensor t;
    t.name = e.at("name").get<std::string>();
    t.shape = e.at("shape").get<nn::Shape>();
    t.quantized = e.at("quantized").get<bool>();
    if (t.quantized) {
      std::vector<CodebookLevel> levels;
      for (const auto& l : e.at("codebook").at("levels")) {
        if (l.value("zero", false)) {
          levels.push_back({});
          continue;
        }
        Pow2Level p{l.at("f"), l.at("i"), l.at("g"), l.at("j"), l.at("single")};
        levels.push_back({p.value(), p});
      }
      t.codebook = codebook_from_levels(m.bits, std::move(levels),
                                        e.at("codebook").at("degenerate").get<bool>());
      t.indices = e.at("indices").get<std::vector<std::uint32_t>>();
    } else {
      t.raw = e.at("values").get<std::vector<double>>();
    }
    m.tensors.push_back(std::move(t));
  }
  m.validate();
  return m;
}

}  // namespace fsolc::compress
