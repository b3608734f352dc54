#include "fsolc/nn/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace fsolc::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using CMapVec = Eigen::Map<const Eigen::RowVectorXd>;

constexpr double kClampLo = 1e-12;
constexpr double kClampHi = 1.0 - 1e-12;

std::string layer_label(const Network& net, std::size_t layer) {
  return "layer " + std::to_string(layer) + " (" +
         std::string(to_string(net.layers()[layer].kind)) + ")";
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t conv_kernel_h(const LayerSpec& s) {
  return s.kind == LayerKind::kConv1d ? 1 : s.kernel_h;
}

// Rows are (b, y, x) output positions; columns are (ky, kx, c).
void im2col(const double* x, std::size_t batch, const ActShape& in,
            std::size_t kh, std::size_t kw, double* cols) {
  const std::size_t H = in.h, W = in.w, C = in.c;
  const std::size_t K = kh * kw * C;
  const long ph = static_cast<long>((kh - 1) / 2);
  const long pw = static_cast<long>((kw - 1) / 2);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = x + b * H * W * C;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        double* dst = cols + ((b * H + y) * W + xx) * K;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long sy = static_cast<long>(y + ky) - ph;
          for (std::size_t kx = 0; kx < kw; ++kx, dst += C) {
            const long sx = static_cast<long>(xx + kx) - pw;
            if (sy < 0 || sy >= static_cast<long>(H) || sx < 0 ||
                sx >= static_cast<long>(W)) {
              std::fill(dst, dst + C, 0.0);
            } else {
              const double* src = xb + (static_cast<std::size_t>(sy) * W +
                                        static_cast<std::size_t>(sx)) * C;
              std::copy(src, src + C, dst);
            }
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, std::size_t batch, const ActShape& in,
                std::size_t kh, std::size_t kw, double* dx) {
  const std::size_t H = in.h, W = in.w, C = in.c;
  const std::size_t K = kh * kw * C;
  const long ph = static_cast<long>((kh - 1) / 2);
  const long pw = static_cast<long>((kw - 1) / 2);
  for (std::size_t b = 0; b < batch; ++b) {
    double* db = dx + b * H * W * C;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        const double* src = cols + ((b * H + y) * W + xx) * K;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long sy = static_cast<long>(y + ky) - ph;
          for (std::size_t kx = 0; kx < kw; ++kx, src += C) {
            const long sx = static_cast<long>(xx + kx) - pw;
            if (sy < 0 || sy >= static_cast<long>(H) || sx < 0 ||
                sx >= static_cast<long>(W)) {
              continue;
            }
            double* dst = db + (static_cast<std::size_t>(sy) * W +
                                static_cast<std::size_t>(sx)) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

// acts[k] holds the batched input of layer k; acts.back() is the output.
// cols[k] holds the im2col matrix of conv layer k.
struct Trace {
  std::vector<Buffer> acts;
  std::vector<Buffer> cols;
};

void check_params(const Network& net, const std::vector<Tensor>& params) {
  const auto& own = net.params();
  if (params.size() != own.size()) {
    throw ShapeError("forward: expected " + std::to_string(own.size()) +
                     " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t p = 0; p < own.size(); ++p) {
    if (params[p].shape() != own[p].shape()) {
      throw ShapeError("forward: " + layer_label(net, net.param_info()[p].layer) +
                       " parameter '" + net.param_info()[p].name +
                       "' expected " + shape_to_string(own[p].shape()) +
                       ", got " + shape_to_string(params[p].shape()));
    }
  }
}

std::size_t check_batch(const Network& net, const Tensor& batch) {
  const Shape& in = net.input_shape();
  const bool ok = batch.rank() == in.size() + 1 &&
                  std::equal(in.begin(), in.end(), batch.shape().begin() + 1);
  if (!ok) {
    Shape expected{0};
    expected.insert(expected.end(), in.begin(), in.end());
    std::string exp = shape_to_string(expected);
    exp.replace(1, 1, "B");
    throw ShapeError("input of layer 0 (" +
                     std::string(net.layers().empty()
                                     ? "none"
                                     : to_string(net.layers()[0].kind)) +
                     "): expected " + exp + ", got " +
                     shape_to_string(batch.shape()));
  }
  return batch.dim(0);
}

Trace run_forward(const Network& net, const std::vector<Tensor>& params,
                  const Tensor& batch) {
  const std::size_t B = check_batch(net, batch);
  const auto& layers = net.layers();
  const auto& shapes = net.activation_shapes();
  Trace tr;
  tr.acts.resize(layers.size() + 1);
  tr.cols.resize(layers.size());
  tr.acts[0].assign(batch.values().begin(), batch.values().end());

  for (std::size_t k = 0; k < layers.size(); ++k) {
    const LayerSpec& spec = layers[k];
    const ActShape& in = shapes[k];
    const Buffer& x = tr.acts[k];
    Buffer& y = tr.acts[k + 1];
    switch (spec.kind) {
      case LayerKind::kConv1d:
      case LayerKind::kConv2d: {
        const std::size_t kh = conv_kernel_h(spec), kw = spec.kernel_w;
        const std::size_t K = kh * kw * in.c;
        const std::size_t rows = B * in.h * in.w;
        auto& cols = tr.cols[k];
        cols.resize(rows * K);
        im2col(x.data(), B, in, kh, kw, cols.data());
        const Tensor& kern = params[*net.kernel_index(k)];
        const Tensor& bias = params[*net.bias_index(k)];
        y.resize(rows * spec.filters);
        MapMat ym(y.data(), static_cast<long>(rows), static_cast<long>(spec.filters));
        ym.noalias() = CMapMat(cols.data(), static_cast<long>(rows), static_cast<long>(K)) *
                       CMapMat(kern.data(), static_cast<long>(spec.filters), static_cast<long>(K)).transpose();
        ym.rowwise() += CMapVec(bias.data(), static_cast<long>(spec.filters));
        break;
      }
      case LayerKind::kDense: {
        const std::size_t n = in.size();
        const Tensor& kern = params[*net.kernel_index(k)];
        const Tensor& bias = params[*net.bias_index(k)];
        y.resize(B * spec.units);
        MapMat ym(y.data(), static_cast<long>(B), static_cast<long>(spec.units));
        ym.noalias() = CMapMat(x.data(), static_cast<long>(B), static_cast<long>(n)) *
                       CMapMat(kern.data(), static_cast<long>(spec.units), static_cast<long>(n)).transpose();
        ym.rowwise() += CMapVec(bias.data(), static_cast<long>(spec.units));
        break;
      }
      case LayerKind::kRelu:
        y.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
        break;
      case LayerKind::kSigmoid:
        y.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
        break;
      case LayerKind::kFlatten:
        y = x;
        break;
    }
  }
  return tr;
}

Tensor output_tensor(const Network& net, std::size_t batch,
                     Buffer values) {
  Shape shape{batch};
  const Shape per = net.output_shape();
  shape.insert(shape.end(), per.begin(), per.end());
  return Tensor::adopt(std::move(shape), std::move(values));
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv1d: return "conv1d";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kDense: return "dense";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSigmoid: return "sigmoid";
    case LayerKind::kFlatten: return "flatten";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::kConv1d, LayerKind::kConv2d, LayerKind::kDense,
                 LayerKind::kRelu, LayerKind::kSigmoid, LayerKind::kFlatten}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv1d(std::size_t filters, std::size_t kernel) {
  LayerSpec s{LayerKind::kConv1d};
  s.filters = filters;
  s.kernel_h = 1;
  s.kernel_w = kernel;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t filters, std::size_t kernel_h,
                            std::size_t kernel_w) {
  LayerSpec s{LayerKind::kConv2d};
  s.filters = filters;
  s.kernel_h = kernel_h;
  s.kernel_w = kernel_w;
  return s;
}

LayerSpec LayerSpec::dense(std::size_t units) {
  LayerSpec s{LayerKind::kDense};
  s.units = units;
  return s;
}

Network::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  ActShape a;
  switch (input_shape_.size()) {
    case 1: a = {1, input_shape_[0], 1}; break;
    case 2: a = {input_shape_[0], input_shape_[1], 1}; break;
    case 3: a = {input_shape_[0], input_shape_[1], input_shape_[2]}; break;
    default:
      throw ShapeError("network input must have rank 1-3, got " +
                       shape_to_string(input_shape_));
  }
  if (a.size() == 0) throw ShapeError("network input has a zero dimension");
  acts_.push_back(a);
  kernel_idx_.assign(layers_.size(), std::nullopt);
  bias_idx_.assign(layers_.size(), std::nullopt);

  for (std::size_t k = 0; k < layers_.size(); ++k) {
    LayerSpec& s = layers_[k];
    const std::string base = "layer" + std::to_string(k) + "_" +
                             std::string(to_string(s.kind));
    auto add_param = [&](Shape shape, ParamRole role) {
      params_.emplace_back(std::move(shape));
      info_.push_back({base + (role == ParamRole::kKernel ? ".kernel" : ".bias"),
                       k, role, role == ParamRole::kKernel});
      return params_.size() - 1;
    };
    switch (s.kind) {
      case LayerKind::kConv1d:
        if (a.h != 1) {
          throw ShapeError(base + ": conv1d needs a 1-D input, got " +
                           std::to_string(a.h) + "x" + std::to_string(a.w) +
                           "x" + std::to_string(a.c));
        }
        s.kernel_h = 1;
        [[fallthrough]];
      case LayerKind::kConv2d:
        if (s.filters == 0 || s.kernel_h == 0 || s.kernel_w == 0) {
          throw std::invalid_argument(base + ": filters and kernel must be positive");
        }
        if (s.kind == LayerKind::kConv1d) {
          kernel_idx_[k] = add_param({s.filters, s.kernel_w, a.c}, ParamRole::kKernel);
        } else {
          kernel_idx_[k] = add_param({s.filters, s.kernel_h, s.kernel_w, a.c},
                                     ParamRole::kKernel);
        }
        bias_idx_[k] = add_param({s.filters}, ParamRole::kBias);
        a = {a.h, a.w, s.filters};
        break;
      case LayerKind::kDense:
        if (s.units == 0) throw std::invalid_argument(base + ": units must be positive");
        kernel_idx_[k] = add_param({s.units, a.size()}, ParamRole::kKernel);
        bias_idx_[k] = add_param({s.units}, ParamRole::kBias);
        a = {1, 1, s.units};
        break;
      case LayerKind::kFlatten:
        a = {1, 1, a.size()};
        break;
      case LayerKind::kRelu:
      case LayerKind::kSigmoid:
        break;
    }
    acts_.push_back(a);
  }
}

Shape Network::output_shape() const {
  const ActShape& a = acts_.back();
  if (a.h == 1 && a.w == 1) return {a.c};
  if (a.h == 1 && a.c == 1) return {a.w};
  if (a.c == 1) return {a.h, a.w};
  return {a.h, a.w, a.c};
}

std::optional<std::size_t> Network::kernel_index(std::size_t layer) const {
  return kernel_idx_.at(layer);
}

std::optional<std::size_t> Network::bias_index(std::size_t layer) const {
  return bias_idx_.at(layer);
}

std::vector<bool> Network::quantizable_mask() const {
  std::vector<bool> mask;
  mask.reserve(info_.size());
  for (const auto& i : info_) mask.push_back(i.quantizable);
  return mask;
}

void Network::set_quantizable(std::size_t param, bool quantizable) {
  info_.at(param).quantizable = quantizable;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void Network::init_he_uniform(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p];
    if (info_[p].role == ParamRole::kBias) {
      t.fill(0.0);
      continue;
    }
    const std::size_t fan_in = t.size() / t.dim(0);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : t.values()) v = dist(rng);
  }
}

Network make_siso_cnn(std::size_t block_len, std::size_t kernel,
                      std::vector<std::size_t> filters) {
  std::vector<LayerSpec> layers;
  for (std::size_t f : filters) {
    layers.push_back(LayerSpec::conv1d(f, kernel));
    layers.push_back(LayerSpec::relu());
  }
  layers.push_back(LayerSpec::flatten());
  layers.push_back(LayerSpec::dense(block_len));
  layers.push_back(LayerSpec::sigmoid());
  return Network({block_len}, std::move(layers));
}

Network make_simo_cnn(std::size_t antennas, std::size_t block_len,
                      std::size_t kernel_h, std::size_t kernel_w,
                      std::vector<std::size_t> filters) {
  std::vector<LayerSpec> layers;
  for (std::size_t f : filters) {
    layers.push_back(LayerSpec::conv2d(f, kernel_h, kernel_w));
    layers.push_back(LayerSpec::relu());
  }
  layers.push_back(LayerSpec::flatten());
  layers.push_back(LayerSpec::dense(block_len));
  layers.push_back(LayerSpec::sigmoid());
  return Network({antennas, block_len}, std::move(layers));
}

Tensor forward(const Network& net, const Tensor& batch) {
  return forward_with(net, net.params(), batch);
}

Tensor forward_with(const Network& net, const std::vector<Tensor>& params,
                    const Tensor& batch) {
  check_params(net, params);
  Trace tr = run_forward(net, params, batch);
  return output_tensor(net, batch.dim(0), std::move(tr.acts.back()));
}

double bce_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("bce_loss: prediction " + shape_to_string(pred.shape()) +
                     " vs target " + shape_to_string(target.shape()));
  }
  if (pred.empty()) throw ShapeError("bce_loss: empty tensors");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double t = target[i];
    if (t != 0.0 && t != 1.0) {
      throw std::invalid_argument("bce_loss: target[" + std::to_string(i) +
                                  "] = " + std::to_string(t) +
                                  " is not in {0, 1}");
    }
    const double p = std::clamp(pred[i], kClampLo, kClampHi);
    sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(pred.size());
}

LossAndGradients backward(const Network& net, const Tensor& batch,
                          const Tensor& target,
                          const std::vector<Tensor>* extra_grad) {
  const auto& params = net.params();
  Trace tr = run_forward(net, params, batch);
  const std::size_t B = batch.dim(0);
  Tensor pred = output_tensor(net, B, tr.acts.back());

  LossAndGradients out;
  out.loss = bce_loss(pred, target);
  out.grads.reserve(params.size());
  for (const auto& p : params) out.grads.emplace_back(p.shape());

  const auto& layers = net.layers();
  const auto& shapes = net.activation_shapes();
  const double inv_n = 1.0 / static_cast<double>(pred.size());

  // dy: gradient w.r.t. the output of the current layer.
  Buffer dy(pred.size());
  std::size_t k = layers.size();
  if (k > 0 && layers[k - 1].kind == LayerKind::kSigmoid) {
    // Sigmoid and cross-entropy fused: d/dz = (p - t) / N. Inside the clamp
    // range this is exactly the derivative of the clamped loss.
    for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = (pred[i] - target[i]) * inv_n;
    --k;
  } else {
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const double p = pred[i];
      if (p < kClampLo || p > kClampHi) {
        dy[i] = 0.0;
      } else {
        const double t = target[i];
        dy[i] = (-t / p + (1.0 - t) / (1.0 - p)) * inv_n;
      }
    }
  }

  Buffer dx;
  while (k-- > 0) {
    const LayerSpec& spec = layers[k];
    const ActShape& in = shapes[k];
    const Buffer& x = tr.acts[k];
    const bool need_dx = k > 0;
    switch (spec.kind) {
      case LayerKind::kConv1d:
      case LayerKind::kConv2d: {
        const std::size_t kh = conv_kernel_h(spec), kw = spec.kernel_w;
        const long K = static_cast<long>(kh * kw * in.c);
        const long rows = static_cast<long>(B * in.h * in.w);
        const long F = static_cast<long>(spec.filters);
        const std::size_t ki = *net.kernel_index(k), bi = *net.bias_index(k);
        CMapMat dym(dy.data(), rows, F);
        CMapMat cols(tr.cols[k].data(), rows, K);
        MapMat(out.grads[ki].data(), F, K).noalias() = dym.transpose() * cols;
        Eigen::Map<Eigen::RowVectorXd>(out.grads[bi].data(), F) = dym.colwise().sum();
        if (need_dx) {
          RowMat dcols = dym * CMapMat(params[ki].data(), F, K);
          dx.assign(x.size(), 0.0);
          col2im_add(dcols.data(), B, in, kh, kw, dx.data());
        }
        break;
      }
      case LayerKind::kDense: {
        const long n = static_cast<long>(in.size());
        const long U = static_cast<long>(spec.units);
        const long Bl = static_cast<long>(B);
        const std::size_t ki = *net.kernel_index(k), bi = *net.bias_index(k);
        CMapMat dym(dy.data(), Bl, U);
        MapMat(out.grads[ki].data(), U, n).noalias() =
            dym.transpose() * CMapMat(x.data(), Bl, n);
        Eigen::Map<Eigen::RowVectorXd>(out.grads[bi].data(), U) = dym.colwise().sum();
        if (need_dx) {
          dx.resize(x.size());
          MapMat(dx.data(), Bl, n).noalias() = dym * CMapMat(params[ki].data(), U, n);
        }
        break;
      }
      case LayerKind::kRelu:
        dx.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
        break;
      case LayerKind::kSigmoid: {
        const Buffer& y = tr.acts[k + 1];
        dx.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case LayerKind::kFlatten:
        dx = dy;
        break;
    }
    if (!need_dx) break;
    dy.swap(dx);
  }

  if (extra_grad) {
    if (extra_grad->size() != out.grads.size()) {
      throw ShapeError("backward: extra_grad has " +
                       std::to_string(extra_grad->size()) + " tensors, expected " +
                       std::to_string(out.grads.size()));
    }
    for (std::size_t p = 0; p < out.grads.size(); ++p) {
      const Tensor& e = (*extra_grad)[p];
      if (e.empty()) continue;
      if (e.shape() != out.grads[p].shape()) {
        throw ShapeError("backward: extra_grad for '" + net.param_info()[p].name +
                         "' expected " + shape_to_string(out.grads[p].shape()) +
                         ", got " + shape_to_string(e.shape()));
      }
      for (std::size_t i = 0; i < e.size(); ++i) out.grads[p][i] += e[i];
    }
  }
  return out;
}

}  // namespace fsolc::nn
