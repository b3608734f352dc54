#include "fsolc/nn/serialize.hpp"

#include <fstream>
#include <iterator>

namespace fsolc::nn {
namespace {

constexpr char kCheckpointMagic[4] = {'F', 'S', 'C', 'K'};
constexpr std::uint16_t kCheckpointVersion = 1;

}  // namespace

void ByteWriter::str(const std::string& s) {
  if (s.size() > 0xffff) throw FormatError("string too long to serialize");
  u16(static_cast<std::uint16_t>(s.size()));
  bytes(s.data(), s.size());
}

std::vector<std::uint8_t> ByteReader::bytes(std::size_t n) {
  need(n);
  std::vector<std::uint8_t> out(buf_.begin() + static_cast<long>(pos_),
                                buf_.begin() + static_cast<long>(pos_ + n));
  pos_ += n;
  return out;
}

std::string ByteReader::str() {
  const std::size_t n = u16();
  auto b = bytes(n);
  return std::string(b.begin(), b.end());
}

std::vector<std::uint8_t> read_all(std::istream& in) {
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_architecture(ByteWriter& w, const Shape& input, const std::vector<LayerSpec>& layers) {
  w.u8(static_cast<std::uint8_t>(input.size()));
  for (std::size_t d : input) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u32(static_cast<std::uint32_t>(l.kind == LayerKind::kDense ? l.units : l.filters));
    w.u32(static_cast<std::uint32_t>(l.kernel_h));
    w.u32(static_cast<std::uint32_t>(l.kernel_w));
  }
}

void read_architecture(ByteReader& r, Shape& input, std::vector<LayerSpec>& layers) {
  input.assign(r.u8(), 0);
  for (auto& d : input) d = r.u32();
  layers.assign(r.u32(), LayerSpec{});
  for (auto& l : layers) {
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::kFlatten)) {
      throw FormatError("unknown layer kind " + std::to_string(kind));
    }
    l.kind = static_cast<LayerKind>(kind);
    const std::uint32_t width = r.u32();
    if (l.kind == LayerKind::kDense) l.units = width; else l.filters = width;
    l.kernel_h = r.u32();
    l.kernel_w = r.u32();
  }
}

nlohmann::json architecture_to_json(const Shape& input, const std::vector<LayerSpec>& layers) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers) {
    nlohmann::json e{{"kind", std::string(to_string(l.kind))}};
    if (l.kind == LayerKind::kDense) e["units"] = l.units;
    if (l.kind == LayerKind::kConv1d || l.kind == LayerKind::kConv2d) {
      e["filters"] = l.filters;
      e["kernel"] = l.kind == LayerKind::kConv1d ? nlohmann::json(l.kernel_w)
                                                  : nlohmann::json{l.kernel_h, l.kernel_w};
    }
    arr.push_back(e);
  }
  return {{"input_shape", input}, {"layers", arr}};
}

void architecture_from_json(const nlohmann::json& j, Shape& input, std::vector<LayerSpec>& layers) {
  input = j.at("input_shape").get<Shape>();
  layers.clear();
  for (const auto& e : j.at("layers")) {
    const LayerKind kind = layer_kind_from_string(e.at("kind").get<std::string>());
    switch (kind) {
      case LayerKind::kConv1d:
        layers.push_back(LayerSpec::conv1d(e.at("filters"), e.at("kernel")));
        break;
      case LayerKind::kConv2d:
        layers.push_back(LayerSpec::conv2d(e.at("filters"), e.at("kernel").at(0), e.at("kernel").at(1)));
        break;
      case LayerKind::kDense:
        layers.push_back(LayerSpec::dense(e.at("units")));
        break;
      default:
        layers.push_back(LayerSpec{kind});
    }
  }
}

void write_checkpoint(std::ostream& out, const Network& net) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u16(kCheckpointVersion);
  write_architecture(w, net.input_shape(), net.layers());
  w.u32(static_cast<std::uint32_t>(net.params().size()));
  for (std::size_t p = 0; p < net.params().size(); ++p) {
    const Tensor& t = net.params()[p];
    w.u8(net.param_info()[p].quantizable ? 1 : 0);
    w.u64(t.size());
    for (double v : t.values()) w.f64(v);
  }
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw std::runtime_error("checkpoint write failed");
}

Network read_checkpoint(std::istream& in) {
  ByteReader r(read_all(in));
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Shape input;
  std::vector<LayerSpec> layers;
  read_architecture(r, input, layers);
  Network net(input, layers);
  const std::uint32_t count = r.u32();
  if (count != net.params().size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) +
                      " tensors, architecture needs " + std::to_string(net.params().size()));
  }
  for (std::size_t p = 0; p < count; ++p) {
    net.set_quantizable(p, r.u8() != 0);
    const std::uint64_t n = r.u64();
    Tensor& t = net.params()[p];
    if (n != t.size()) throw FormatError("tensor " + std::to_string(p) + " size mismatch");
    for (double& v : t.values()) v = r.f64();
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return net;
}

void save_checkpoint(const std::string& path, const Network& net) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_checkpoint(f, net);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  return read_checkpoint(f);
}

nlohmann::json checkpoint_to_json(const Network& net) {
  nlohmann::json j = architecture_to_json(net.input_shape(), net.layers());
  j["format"] = "fsolc-checkpoint";
  j["version"] = kCheckpointVersion;
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t p = 0; p < net.params().size(); ++p) {
    const auto& t = net.params()[p];
    tensors.push_back({{"name", net.param_info()[p].name},
                       {"shape", t.shape()},
                       {"quantizable", net.param_info()[p].quantizable},
                       {"values", std::vector<double>(t.values().begin(), t.values().end())}});
  }
  j["tensors"] = tensors;
  return j;
}

Network checkpoint_from_json(const nlohmann::json& j) {
  Shape input;
  std::vector<LayerSpec> layers;
  architecture_from_json(j, input, layers);
  Network net(input, layers);
  const auto& tensors = j.at("tensors");
  if (tensors.size() != net.params().size()) throw FormatError("tensor count mismatch");
  for (std::size_t p = 0; p < tensors.size(); ++p) {
    auto values = tensors[p].at("values").get<std::vector<double>>();
    net.params()[p] = Tensor(net.params()[p].shape(), std::move(values));
    net.set_quantizable(p, tensors[p].at("quantizable").get<bool>());
  }
  return net;
}

}  // namespace fsolc::nn
