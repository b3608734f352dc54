#include "fsolc/compress/lc.hpp"

#include <cmath>
#include <stdexcept>

namespace fsolc::compress {

std::string to_string(MuSchedule s) {
  return s == MuSchedule::kAsWritten ? "as_written" : "geometric";
}

MuSchedule mu_schedule_from_string(const std::string& s) {
  if (s == "as_written") return MuSchedule::kAsWritten;
  if (s == "geometric") return MuSchedule::kGeometric;
  throw std::invalid_argument("unknown mu schedule '" + s + "' (as_written|geometric)");
}

void LcConfig::validate() const {
  if (bits < 1 || bits > 8) throw std::invalid_argument("bits must be in 1..8");
  if (!(a > 1.0)) throw std::invalid_argument("growth constant a must exceed 1");
  if (!(mu0 > 0.0)) throw std::invalid_argument("mu0 must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (epochs > 0 && epoch_size == 0) throw std::invalid_argument("epoch_size must be positive");
}

nn::Tensor penalty_gradient(const nn::Tensor& w, const nn::Tensor& w_hat,
                            const nn::Tensor& lambda, double mu) {
  if (w.shape() != w_hat.shape() || w.shape() != lambda.shape()) {
    throw nn::ShapeError("penalty_gradient: shapes " + nn::shape_to_string(w.shape()) + ", " +
                         nn::shape_to_string(w_hat.shape()) + ", " +
                         nn::shape_to_string(lambda.shape()) + " differ");
  }
  nn::Tensor g(w.shape());
  for (std::size_t k = 0; k < w.size(); ++k) g[k] = mu * (w[k] - w_hat[k]) - lambda[k];
  return g;
}

namespace {

double next_mu(double mu, double a, std::size_t i, MuSchedule s) {
  return s == MuSchedule::kAsWritten ? mu * std::pow(a, static_cast<double>(i)) : mu * a;
}

}  // namespace

LcRun run_lc(LcProblem& problem, const LcConfig& config) {
  config.validate();
  LcRun run;
  LcState& st = run.state;
  st.mu = config.mu0;
  st.a = config.a;

  const std::vector<bool> mask = problem.quantizable();
  std::vector<nn::Tensor>& w = problem.params();
  for (std::size_t p = 0; p < w.size(); ++p) {
    if (!mask[p]) continue;
    st.params.push_back(p);
    st.lambda.emplace_back(w[p].shape());
    st.w_hat.emplace_back(w[p].shape());
    run.index.emplace_back(w[p].size(), 0u);
  }
  // Before any projection the all-zero w_hat is described by a zero-only codebook.
  for (std::size_t k = 0; k < st.params.size(); ++k) {
    LayerCodebook cb;
    cb.bits = config.bits;
    cb.levels = {CodebookLevel{}};
    cb.degenerate = true;
    run.codebooks.push_back(cb);
  }

  for (std::size_t i = 0; i < config.epochs; ++i) {
    st.epoch = i;
    const double mu = st.mu;
    nn::GradientHook hook = [&](const std::vector<nn::Tensor>& params) {
      std::vector<nn::Tensor> extra(params.size());
      for (std::size_t k = 0; k < st.params.size(); ++k) {
        const std::size_t p = st.params[k];
        extra[p] = penalty_gradient(params[p], st.w_hat[k], st.lambda[k], mu);
      }
      return extra;
    };

    double loss = 0.0;
    try {
      loss = problem.train_epoch(hook);
    } catch (const nn::DivergenceError& e) {
      throw nn::DivergenceError(std::string(e.what()) + " in LC epoch " + std::to_string(i),
                                static_cast<long>(i));
    }
    if (!std::isfinite(loss)) {
      throw nn::DivergenceError("LC epoch " + std::to_string(i) + " loss is non-finite",
                                static_cast<long>(i));
    }

    LcEpochRecord rec;
    rec.epoch = i;
    rec.loss = loss;
    rec.mu = mu;
    double dist2 = 0.0;
    for (std::size_t k = 0; k < st.params.size(); ++k) {
      const nn::Tensor& wk = w[st.params[k]];
      run.codebooks[k] = learn_codebook(wk.values(), config.bits, &run.codebooks[k],
                                        config.codebook).codebook;
      run.index[k] = project_indices(wk, st.lambda[k], mu, run.codebooks[k]);
      st.w_hat[k] = decode_indices(run.codebooks[k], wk.shape(), run.index[k]);
      nn::Tensor& lam = st.lambda[k];
      for (std::size_t e = 0; e < wk.size(); ++e) {
        const double diff = wk[e] - st.w_hat[k][e];
        lam[e] -= mu * diff;
        dist2 += diff * diff;
        if (run.index[k][e] == run.codebooks[k].zero_index) ++rec.pruned;
      }
      rec.quantized += wk.size();
    }
    rec.distance = std::sqrt(dist2);
    run.trace.push_back(rec);
    st.mu = next_mu(mu, st.a, i, config.schedule);
  }
  if (config.epochs > 0) st.epoch = config.epochs;
  return run;
}

namespace {

class NetworkProblem final : public LcProblem {
 public:
  NetworkProblem(nn::Network& net, nn::BatchSource& data, const LcConfig& cfg,
                 nn::AdamConfig adam)
      : net_(net), data_(data), cfg_(cfg), adam_(adam, net.params()) {}

  std::vector<nn::Tensor>& params() override { return net_.params(); }
  std::vector<bool> quantizable() const override { return net_.quantizable_mask(); }
  double train_epoch(const nn::GradientHook& penalty) override {
    return nn::train_epoch(net_, adam_, data_, cfg_.epoch_size, cfg_.batch_size, penalty)
        .mean_loss;
  }

 private:
  nn::Network& net_;
  nn::BatchSource& data_;
  const LcConfig& cfg_;
  nn::AdamState adam_;
};

}  // namespace

LcTrainResult lc_train(nn::Network net, nn::BatchSource& data, const LcConfig& config,
                       nn::AdamConfig adam) {
  NetworkProblem problem(net, data, config, adam);
  LcRun run = run_lc(problem, config);
  QuantizedModel model = assemble_model(net, config.bits, run.state.params, run.codebooks,
                                        run.index);
  return {std::move(net), std::move(model), std::move(run.trace)};
}

QuantizedModel post_train_compress(const nn::Network& net, int bits,
                                   const CodebookOptions& options) {
  std::vector<std::size_t> params;
  std::vector<LayerCodebook> codebooks;
  std::vector<std::vector<std::uint32_t>> index;
  for (std::size_t p = 0; p < net.params().size(); ++p) {
    if (!net.param_info()[p].quantizable) continue;
    const nn::Tensor& w = net.params()[p];
    params.push_back(p);
    codebooks.push_back(learn_codebook(w.values(), bits, nullptr, options).codebook);
    index.push_back(nearest_levels(codebooks.back(), w.values()));
  }
  return assemble_model(net, bits, params, codebooks, index);
}

double compression_rate(std::size_t params, std::size_t layers, int bits) {
  if (params == 0 || bits < 1) throw std::invalid_argument("compression_rate: need P >= 1, b >= 1");
  const double p = static_cast<double>(params);
  return 32.0 * p /
         ((bits + 1) * p + std::ldexp(1.0, bits) * 17.0 * static_cast<double>(layers));
}

}  // namespace fsolc::compress
