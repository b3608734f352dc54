#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsolc/nn/network.hpp"

namespace fsolc::nn {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Little-endian primitive writer over a byte buffer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void i8(std::int8_t v) { buf_.push_back(static_cast<std::uint8_t>(v)); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void str(const std::string& s);  // u16 length + bytes
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  template <typename T>
  void put(T v) {
    for (std::size_t k = 0; k < sizeof(T); ++k) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}
  std::uint8_t u8() { need(1); return buf_[pos_++]; }
  std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::vector<std::uint8_t> bytes(std::size_t n);
  std::string str();
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("unexpected end of data");
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(T{buf_[pos_ + k]} << (8 * k));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_all(std::istream& in);

void write_architecture(ByteWriter& w, const Shape& input, const std::vector<LayerSpec>& layers);
void read_architecture(ByteReader& r, Shape& input, std::vector<LayerSpec>& layers);

nlohmann::json architecture_to_json(const Shape& input, const std::vector<LayerSpec>& layers);
void architecture_from_json(const nlohmann::json& j, Shape& input, std::vector<LayerSpec>& layers);

// Full-precision checkpoint; layout in docs/formats.md.
void write_checkpoint(std::ostream& out, const Network& net);
Network read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Network& net);
Network load_checkpoint(const std::string& path);

nlohmann::json checkpoint_to_json(const Network& net);
Network checkpoint_from_json(const nlohmann::json& j);

}  // namespace fsolc::nn
