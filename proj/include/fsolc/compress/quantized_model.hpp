#pragma once

#include <cstdint>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fsolc/compress/codebook.hpp"
#include "fsolc/nn/network.hpp"

namespace fsolc::compress {

/// One parameter tensor of a compressed model: either level indices into a
/// per-tensor codebook, or raw full-precision values.
struct ModelTensor {
  std::string name;
  nn::Shape shape;
  bool quantized = false;
  LayerCodebook codebook;               // quantized only
  std::vector<std::uint32_t> indices;   // quantized only
  std::vector<double> raw;              // otherwise

  friend bool operator==(const ModelTensor&, const ModelTensor&) = default;
};

/// A compressed network: architecture plus one ModelTensor per parameter
/// tensor, in the network's parameter order.
struct QuantizedModel {
  int bits = 1;
  nn::Shape input_shape;
  std::vector<nn::LayerSpec> layers;
  std::vector<ModelTensor> tensors;

  /// Decoded parameters (w_hat for quantized tensors).
  std::vector<nn::Tensor> decode() const;
  /// Network with the decoded parameters installed.
  nn::Network to_network() const;

  std::size_t quantized_parameter_count() const;
  std::size_t raw_parameter_count() const;
  std::size_t quantized_tensor_count() const;
  std::size_t pruned_count() const;

  /// Throws std::invalid_argument if indices, shapes or codebooks disagree.
  void validate() const;

  friend bool operator==(const QuantizedModel&, const QuantizedModel&) = default;
};

/// Assembles a model from a network whose quantizable tensors are given as
/// (codebook, indices) pairs, `quantized[k]` for parameter `params[k]`.
QuantizedModel assemble_model(const nn::Network& net, int bits,
                              const std::vector<std::size_t>& params,
                              const std::vector<LayerCodebook>& codebooks,
                              const std::vector<std::vector<std::uint32_t>>& indices);

// Binary layout is documented in docs/formats.md.
void write_model(std::ostream& out, const QuantizedModel& model);
QuantizedModel read_model(std::istream& in);
void save_model(const std::string& path, const QuantizedModel& model);
QuantizedModel load_model(const std::string& path);

nlohmann::json to_json(const QuantizedModel& model);
QuantizedModel model_from_json(const nlohmann::json& j);

/// Packs indices at `width` bits each, least significant bit first.
std::vector<std::uint8_t> pack_indices(const std::vector<std::uint32_t>& indices, int width);
std::vector<std::uint32_t> unpack_indices(const std::vector<std::uint8_t>& bytes,
                                          std::size_t count, int width);

}  // namespace fsolc::compress
