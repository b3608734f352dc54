#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fsolc/nn/tensor.hpp"

namespace fsolc::nn {

enum class LayerKind : std::uint8_t {
  kConv1d = 0,
  kConv2d = 1,
  kDense = 2,
  kRelu = 3,
  kSigmoid = 4,
  kFlatten = 5,
};

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// One layer of a sequential network. Convolutions are stride 1 with "same"
/// zero padding, so spatial extent is preserved. For conv1d only kernel_w is
/// used (kernel_h is forced to 1).
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t filters = 0;   // conv output channels
  std::size_t kernel_h = 1;  // conv2d only
  std::size_t kernel_w = 1;
  std::size_t units = 0;  // dense output width

  static LayerSpec conv1d(std::size_t filters, std::size_t kernel);
  static LayerSpec conv2d(std::size_t filters, std::size_t kernel_h,
                          std::size_t kernel_w);
  static LayerSpec dense(std::size_t units);
  static LayerSpec relu() { return {LayerKind::kRelu}; }
  static LayerSpec sigmoid() { return {LayerKind::kSigmoid}; }
  static LayerSpec flatten() { return {LayerKind::kFlatten}; }

  bool has_params() const {
    return kind == LayerKind::kConv1d || kind == LayerKind::kConv2d ||
           kind == LayerKind::kDense;
  }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-sample activation geometry, channels last: height x width x channels.
/// A rank-1 input of length L is 1 x L x 1, a rank-2 input M x L is M x L x 1.
struct ActShape {
  std::size_t h = 1;
  std::size_t w = 1;
  std::size_t c = 1;
  std::size_t size() const { return h * w * c; }
  friend bool operator==(const ActShape&, const ActShape&) = default;
};

enum class ParamRole : std::uint8_t { kKernel = 0, kBias = 1 };

struct ParamInfo {
  std::string name;
  std::size_t layer = 0;
  ParamRole role = ParamRole::kKernel;
  bool quantizable = false;
};

/// Sequential network of the six supported layer kinds.
///
/// Parameter layouts:
///   conv kernel   {filters, kernel_h, kernel_w, in_channels}   (conv1d drops
///                                                             kernel_h)
///   dense kernel  {units, in_features}
///   bias          {filters} or {units}
/// Flattening keeps the channels-last order: feature index = (y*W + x)*C + c.
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const { return input_shape_; }
  /// Per-sample output shape (without the batch axis).
  Shape output_shape() const;
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<ActShape>& activation_shapes() const { return acts_; }

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<ParamInfo>& param_info() const { return info_; }

  /// Index into params() of the kernel / bias of layer `layer`, if any.
  std::optional<std::size_t> kernel_index(std::size_t layer) const;
  std::optional<std::size_t> bias_index(std::size_t layer) const;

  std::vector<bool> quantizable_mask() const;
  void set_quantizable(std::size_t param, bool quantizable);

  std::size_t parameter_count() const;

  /// Uniform He initialisation, U(-sqrt(6/fan_in), sqrt(6/fan_in)) for
  /// kernels, zero biases.
  void init_he_uniform(std::uint64_t seed);

 private:
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<ActShape> acts_;  // acts_[k] = input of layer k; back() = output
  std::vector<Tensor> params_;
  std::vector<ParamInfo> info_;
  std::vector<std::optional<std::size_t>> kernel_idx_;
  std::vector<std::optional<std::size_t>> bias_idx_;
};

/// SISO receiver: three conv1d+ReLU blocks, flatten, dense(L), sigmoid.
Network make_siso_cnn(std::size_t block_len, std::size_t kernel = 3,
                      std::vector<std::size_t> filters = {32, 64, 128});
/// SIMO receiver: input M x L, three conv2d+ReLU blocks, flatten, dense(L),
/// sigmoid.
Network make_simo_cnn(std::size_t antennas, std::size_t block_len,
                      std::size_t kernel_h = 3, std::size_t kernel_w = 3,
                      std::vector<std::size_t> filters = {32, 64, 128});

/// Batched inference. `batch` is {B, input_shape...}; result is {B, output}.
Tensor forward(const Network& net, const Tensor& batch);

/// Same as forward() but with `params` substituted for the network's own.
Tensor forward_with(const Network& net, const std::vector<Tensor>& params,
                    const Tensor& batch);

/// Mean binary cross-entropy with predictions clamped to [1e-12, 1-1e-12].
double bce_loss(const Tensor& pred, const Tensor& target);

struct LossAndGradients {
  double loss = 0.0;
  std::vector<Tensor> grads;  // parallel to Network::params()
};

/// Gradient of bce_loss(forward(net, batch), target) with respect to every
/// parameter tensor. When `extra_grad` is given it is added elementwise.
LossAndGradients backward(const Network& net, const Tensor& batch,
                          const Tensor& target,
                          const std::vector<Tensor>* extra_grad = nullptr);

}  // namespace fsolc::nn
