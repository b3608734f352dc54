#include "fsolc/qinfer/engine.hpp"

#include <algorithm>
#include <stdexcept>

namespace fsolc::qinfer {

ShiftAddOp ShiftAddOp::from_level(const compress::Pow2Level& level) {
  ShiftAddOp op;
  op.neg1 = level.f < 0;
  op.k1 = level.i;
  op.two_terms = !level.single;
  op.neg2 = level.g < 0;
  op.k2 = level.j;
  constexpr std::uint64_t kSign = std::uint64_t{1} << 63;
  op.sign1_ = op.neg1 ? kSign : 0;
  op.sign2_ = op.neg2 ? kSign : 0;
  op.step1_ = static_cast<std::uint64_t>(static_cast<std::int64_t>(op.k1)) << 52;
  op.step2_ = static_cast<std::uint64_t>(static_cast<std::int64_t>(op.k2)) << 52;
  op.keep2_ = op.two_terms ? ~std::uint64_t{0} : 0;
  // Biased exponents e for which every shifted term stays a normal number.
  const int kmin = op.two_terms ? std::min(op.k1, op.k2) : op.k1;
  const int kmax = op.two_terms ? std::max(op.k1, op.k2) : op.k1;
  const int lo = std::max(1, 1 - kmin);
  const int hi = std::min(0x7fe, 0x7fe - kmax);
  op.safe_lo_ = static_cast<std::uint64_t>(lo);
  op.safe_span_ = static_cast<std::uint64_t>(hi - lo);
  return op;
}

LayerOps& LayerOps::operator+=(const LayerOps& o) {
  products += o.products;
  pruned += o.pruned;
  shifts += o.shifts;
  term_adds += o.term_adds;
  accumulate_adds += o.accumulate_adds;
  multiplies += o.multiplies;
  return *this;
}

bool OpCounter::empty() const {
  for (const auto& r : layers) {
    if (r.products || r.pruned) return false;
  }
  return true;
}

LayerOps OpCounter::total() const {
  LayerOps t;
  t.name = "total";
  t.quantized = true;
  for (const auto& r : layers) {
    t += r;
    t.quantized = t.quantized && r.quantized;
  }
  return t;
}

void OpCounter::merge(const OpCounter& other) {
  if (layers.empty()) {
    layers = other.layers;
    return;
  }
  if (other.layers.size() != layers.size()) {
    throw std::invalid_argument("OpCounter::merge: counters belong to different models");
  }
  for (std::size_t k = 0; k < layers.size(); ++k) layers[k] += other.layers[k];
}

Engine::Engine(compress::QuantizedModel model) : model_(std::move(model)) {
  model_.validate();
  const nn::Shape& in = model_.input_shape;
  if (in.empty() || in.size() > 2) {
    throw nn::ShapeError("engine: input must be rank 1 or 2, got " + nn::shape_to_string(in));
  }
  std::size_t h = in.size() == 2 ? in[0] : 1;
  std::size_t w = in.size() == 2 ? in[1] : in[0];
  std::size_t c = 1;
  std::size_t p = 0;
  std::size_t rows = 0;
  for (std::size_t l = 0; l < model_.layers.size(); ++l) {
    const nn::LayerSpec& spec = model_.layers[l];
    Layer layer;
    layer.spec = spec;
    layer.layer = l;
    layer.in_h = h;
    layer.in_w = w;
    layer.in_c = c;
    if (spec.has_params()) {
      if (p + 1 >= model_.tensors.size()) throw nn::ShapeError("engine: missing parameters");
      const compress::ModelTensor& kern = model_.tensors[p++];
      const compress::ModelTensor& bias = model_.tensors[p++];
      if (bias.quantized) {
        std::vector<double> b;
        for (auto k : bias.indices) b.push_back(bias.codebook.levels[k].value);
        layer.bias = std::move(b);
      } else {
        layer.bias = bias.raw;
      }
      layer.quantized = kern.quantized;
      if (kern.quantized) {
        for (const auto& lv : kern.codebook.levels) {
          layer.ops.push_back(lv.pow2 ? ShiftAddOp::from_level(*lv.pow2) : ShiftAddOp{});
        }
      }
      const bool conv = spec.kind != nn::LayerKind::kDense;
      const std::size_t kh = spec.kind == nn::LayerKind::kConv2d ? spec.kernel_h : 1;
      const std::size_t kw = conv ? spec.kernel_w : 1;
      const std::size_t outs = conv ? spec.filters : spec.units;
      const std::size_t fan_in = conv ? kh * kw * c : h * w * c;
      if (nn::shape_size(kern.shape) != outs * fan_in || layer.bias.size() != outs) {
        throw nn::ShapeError("engine: layer " + std::to_string(l) + " parameters " +
                             nn::shape_to_string(kern.shape) + " do not fit its input");
      }
      layer.taps.resize(outs);
      layer.pruned_taps.resize(outs);
      for (std::size_t o = 0; o < outs; ++o) {
        for (std::size_t e = 0; e < fan_in; ++e) {
          Tap t;
          if (conv) {
            t.ky = static_cast<std::uint32_t>(e / (kw * c));
            t.kx = static_cast<std::uint32_t>((e / c) % kw);
            t.c = static_cast<std::uint32_t>(e % c);
          } else {
            t.c = static_cast<std::uint32_t>(e);
          }
          const std::size_t idx = o * fan_in + e;
          if (kern.quantized) {
            const std::uint32_t level = kern.indices[idx];
            if (level == kern.codebook.zero_index) {
              layer.pruned_taps[o].push_back(t);
              continue;
            }
            t.op = static_cast<std::int32_t>(level);
          } else {
            t.op = kRawMultiply;
            t.raw = kern.raw[idx];
          }
          layer.taps[o].push_back(t);
        }
      }
      layer.row = rows++;
      if (conv) {
        c = spec.filters;
      } else {
        h = w = 1;
        c = spec.units;
      }
    } else if (spec.kind == nn::LayerKind::kFlatten) {
      c = h * w * c;
      h = w = 1;
    }
    layers_.push_back(std::move(layer));
  }
  if (p != model_.tensors.size()) throw nn::ShapeError("engine: unused parameter tensors");
}

OpCounter Engine::make_counter() const {
  OpCounter counter;
  for (const auto& l : layers_) {
    if (!l.spec.has_params()) continue;
    LayerOps row;
    row.layer = l.layer;
    row.name = "layer" + std::to_string(l.layer) + "_" + std::string(nn::to_string(l.spec.kind));
    row.quantized = l.quantized;
    counter.layers.push_back(row);
  }
  return counter;
}

namespace {

struct Tally {
  std::uint64_t products = 0, pruned = 0, two_term = 0, raw = 0;

  void flush(LayerOps& row) const {
    row.products += products;
    row.pruned += pruned;
    row.shifts += products - raw + two_term;
    row.term_adds += two_term;
    row.accumulate_adds += products;
    row.multiplies += raw;
  }
};

inline bool in_bounds(long sy, long sx, std::size_t H, std::size_t W) {
  return sy >= 0 && sx >= 0 && sy < static_cast<long>(H) && sx < static_cast<long>(W);
}

void run_conv(const Engine::Layer& l, const std::vector<double>& a, std::vector<double>& out,
              Tally& tally) {
  const std::size_t H = l.in_h, W = l.in_w, C = l.in_c;
  const std::size_t F = l.spec.filters;
  const std::size_t kh = l.spec.kind == nn::LayerKind::kConv2d ? l.spec.kernel_h : 1;
  const long oy = static_cast<long>((kh - 1) / 2);
  const long ox = static_cast<long>((l.spec.kernel_w - 1) / 2);
  out.assign(H * W * F, 0.0);
  std::uint64_t products = 0, two_term = 0, pruned = 0;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t f = 0; f < F; ++f) {
        double acc = l.bias[f];
        for (const Engine::Tap& t : l.taps[f]) {
          const long sy = static_cast<long>(y + t.ky) - oy;
          const long sx = static_cast<long>(x + t.kx) - ox;
          if (!in_bounds(sy, sx, H, W)) continue;
          const double v =
              a[(static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)) * C + t.c];
          ++products;
          if (l.quantized) {
            const ShiftAddOp& op = l.ops[static_cast<std::size_t>(t.op)];
            two_term += op.two_terms;
            acc += op.apply(v);
          } else {
            acc += t.raw * v;
          }
        }
        for (const Engine::Tap& t : l.pruned_taps[f]) {
          pruned += in_bounds(static_cast<long>(y + t.ky) - oy,
                              static_cast<long>(x + t.kx) - ox, H, W);
        }
        out[(y * W + x) * F + f] = acc;
      }
    }
  }
  tally.products += products;
  tally.two_term += two_term;
  tally.pruned += pruned;
  if (!l.quantized) tally.raw += products;
}

void run_dense(const Engine::Layer& l, const std::vector<double>& a, std::vector<double>& out,
               Tally& tally) {
  out.assign(l.spec.units, 0.0);
  std::uint64_t products = 0, two_term = 0;
  for (std::size_t u = 0; u < l.spec.units; ++u) {
    double acc = l.bias[u];
    for (const Engine::Tap& t : l.taps[u]) {
      if (l.quantized) {
        const ShiftAddOp& op = l.ops[static_cast<std::size_t>(t.op)];
        two_term += op.two_terms;
        acc += op.apply(a[t.c]);
      } else {
        acc += t.raw * a[t.c];
      }
    }
    products += l.taps[u].size();
    tally.pruned += l.pruned_taps[u].size();
    out[u] = acc;
  }
  tally.products += products;
  tally.two_term += two_term;
  if (!l.quantized) tally.raw += products;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

nn::Tensor Engine::forward(const nn::Tensor& batch, OpCounter* counter) const {
  const nn::Shape& in = model_.input_shape;
  if (batch.rank() != in.size() + 1 ||
      !std::equal(in.begin(), in.end(), batch.shape().begin() + 1)) {
    throw nn::ShapeError("qforward: expected [Bx" + nn::shape_to_string(in).substr(1) +
                         ", got " + nn::shape_to_string(batch.shape()));
  }
  if (counter && counter->layers.empty()) *counter = make_counter();
  const std::size_t B = batch.dim(0);
  const std::size_t per = nn::shape_size(in);
  std::vector<Tally> tallies(layers_.size());
  std::vector<double> a, out;
  std::size_t out_width = 0;
  std::vector<double> result;
  for (std::size_t b = 0; b < B; ++b) {
    a.assign(batch.data() + b * per, batch.data() + (b + 1) * per);
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const Layer& l = layers_[k];
      switch (l.spec.kind) {
        case nn::LayerKind::kConv1d:
        case nn::LayerKind::kConv2d:
          run_conv(l, a, out, tallies[k]);
          a.swap(out);
          break;
        case nn::LayerKind::kDense:
          run_dense(l, a, out, tallies[k]);
          a.swap(out);
          break;
        case nn::LayerKind::kRelu:
          for (double& v : a) v = v > 0.0 ? v : 0.0;
          break;
        case nn::LayerKind::kSigmoid:
          for (double& v : a) v = sigmoid(v);
          break;
        case nn::LayerKind::kFlatten:
          break;
      }
    }
    out_width = a.size();
    result.insert(result.end(), a.begin(), a.end());
  }
  if (counter) {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      if (layers_[k].spec.has_params()) tallies[k].flush(counter->layers.at(layers_[k].row));
    }
  }
  return nn::Tensor({B, out_width}, std::move(result));
}

nn::Tensor qforward(const compress::QuantizedModel& model, const nn::Tensor& batch,
                    OpCounter& counter) {
  return Engine(model).forward(batch, &counter);
}

namespace {

CostRow cost_row(const LayerOps& ops, int bits) {
  CostRow r;
  r.ops = ops;
  const std::uint64_t mults = ops.products + ops.pruned;
  r.fp_shifts = static_cast<std::uint64_t>(bits) * mults;
  r.fp_adds = static_cast<std::uint64_t>(bits - 1) * mults;
  if (ops.shifts > 0) {
    r.shift_ratio = static_cast<double>(bits) * static_cast<double>(ops.products - ops.multiplies) /
                    static_cast<double>(ops.shifts);
    r.model_shift_ratio = static_cast<double>(bits) *
                          static_cast<double>(mults - ops.multiplies) /
                          static_cast<double>(ops.shifts);
  }
  return r;
}

nlohmann::json row_json(const CostRow& r) {
  return {{"layer", r.ops.layer},
          {"name", r.ops.name},
          {"quantized", r.ops.quantized},
          {"products", r.ops.products},
          {"pruned", r.ops.pruned},
          {"shifts", r.ops.shifts},
          {"term_adds", r.ops.term_adds},
          {"accumulate_adds", r.ops.accumulate_adds},
          {"multiplies", r.ops.multiplies},
          {"fp_shifts", r.fp_shifts},
          {"fp_adds", r.fp_adds},
          {"shift_ratio", r.shift_ratio},
          {"model_shift_ratio", r.model_shift_ratio}};
}

}  // namespace

CostReport count_report(const OpCounter& counter, const compress::QuantizedModel& model,
                        int reference_bits) {
  if (counter.empty()) throw std::invalid_argument("count_report: counter is empty");
  if (reference_bits < 2) throw std::invalid_argument("count_report: reference_bits < 2");
  std::size_t param_layers = 0;
  for (const auto& l : model.layers) param_layers += l.has_params() ? 1 : 0;
  if (param_layers != counter.layers.size()) {
    throw std::invalid_argument("count_report: counter does not belong to this model");
  }
  CostReport rep;
  rep.reference_bits = reference_bits;
  for (const auto& row : counter.layers) rep.rows.push_back(cost_row(row, reference_bits));
  rep.total = cost_row(counter.total(), reference_bits);
  rep.nominal_shift_ratio = reference_bits / 2.0;
  return rep;
}

nlohmann::json to_json(const CostReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) rows.push_back(row_json(r));
  return {{"reference_bits", report.reference_bits},
          {"nominal_shift_ratio", report.nominal_shift_ratio},
          {"layers", rows},
          {"total", row_json(report.total)}};
}

}  // namespace fsolc::qinfer
