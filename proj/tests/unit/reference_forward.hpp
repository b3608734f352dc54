#pragma once

// Loop-nest reference forward pass used as an oracle in tests. It shares no
// code with the library; it only relies on the documented parameter layouts.

#include <cmath>
#include <vector>

#include "fsolc/nn/network.hpp"

namespace fsolc::testing {

inline std::vector<double> reference_forward_sample(const nn::Network& net,
                                                    const std::vector<nn::Tensor>& params,
                                                    const double* input) {
  const nn::Shape& in = net.input_shape();
  std::size_t H = in.size() == 2 ? in[0] : 1;
  std::size_t W = in.size() == 2 ? in[1] : in[0];
  std::size_t C = 1;
  std::vector<double> a(input, input + H * W);
  std::size_t p = 0;
  for (const auto& s : net.layers()) {
    switch (s.kind) {
      case nn::LayerKind::kConv1d:
      case nn::LayerKind::kConv2d: {
        const std::size_t kh = s.kind == nn::LayerKind::kConv1d ? 1 : s.kernel_h;
        const std::size_t kw = s.kernel_w;
        const nn::Tensor& kern = params[p++];
        const nn::Tensor& bias = params[p++];
        const long oy = static_cast<long>((kh - 1) / 2), ox = static_cast<long>((kw - 1) / 2);
        std::vector<double> out(H * W * s.filters);
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x)
            for (std::size_t f = 0; f < s.filters; ++f) {
              double acc = bias[f];
              for (std::size_t ky = 0; ky < kh; ++ky)
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const long sy = static_cast<long>(y + ky) - oy;
                  const long sx = static_cast<long>(x + kx) - ox;
                  if (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W))
                    continue;
                  for (std::size_t c = 0; c < C; ++c) {
                    const double wv = kern[((f * kh + ky) * kw + kx) * C + c];
                    acc += wv * a[(static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)) * C + c];
                  }
                }
              out[(y * W + x) * s.filters + f] = acc;
            }
        a = std::move(out);
        C = s.filters;
        break;
      }
      case nn::LayerKind::kDense: {
        const nn::Tensor& kern = params[p++];
        const nn::Tensor& bias = params[p++];
        const std::size_t n = a.size();
        std::vector<double> out(s.units);
        for (std::size_t u = 0; u < s.units; ++u) {
          double acc = bias[u];
          for (std::size_t i = 0; i < n; ++i) acc += kern[u * n + i] * a[i];
          out[u] = acc;
        }
        a = std::move(out);
        H = 1;
        W = 1;
        C = s.units;
        break;
      }
      case nn::LayerKind::kRelu:
        for (double& v : a) v = v > 0 ? v : 0;
        break;
      case nn::LayerKind::kSigmoid:
        for (double& v : a) v = 1.0 / (1.0 + std::exp(-v));
        break;
      case nn::LayerKind::kFlatten:
        C = H * W * C;
        H = W = 1;
        break;
    }
  }
  return a;
}

}  // namespace fsolc::testing
