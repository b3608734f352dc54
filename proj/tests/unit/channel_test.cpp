#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "fsolc/channel/bessel.hpp"
#include "fsolc/channel/gamma_gamma.hpp"
#include "fsolc/channel/link.hpp"
#include "fsolc/nn/serialize.hpp"

using namespace fsolc::channel;

namespace {

// Integral representation K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt.
double bessel_k_quadrature(double nu, double x) {
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate(
      [&](double t) {
        // exp(-x cosh t) cosh(nu t) without inf * 0 in the far tail
        return 0.5 * (std::exp(nu * t - x * std::cosh(t)) + std::exp(-nu * t - x * std::cosh(t)));
      },
      0.0,
      std::numeric_limits<double>::infinity());
}

double integrate_moment(const TurbulenceParams& p, int power, double lo, double hi) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(
      [&](double t) { return t > 0.0 ? std::pow(t, power) * gg_pdf(t, p) : 0.0; }, lo, hi);
}

double integrate_moment_inf(const TurbulenceParams& p, int power) {
  boost::math::quadrature::exp_sinh<double> tail;
  return integrate_moment(p, power, 0.0, 1.0) +
         tail.integrate([&](double t) { return std::pow(t, power) * gg_pdf(t, p); }, 1.0,
                        std::numeric_limits<double>::infinity());
}

const TurbulenceParams kPaper{4.0, 1.9};
const TurbulenceParams kOthers[] = {{8.43171256672561607859888041571, 6.92205321920481336379658043782},
                                    {2.5, 0.8}};

}  // namespace

TEST(Rytov, GoldenValuesAtUnitVariance) {
  const auto p = alpha_beta_from_rytov(1.0);
  EXPECT_NEAR(p.alpha, 4.3938590253921471, 1e-9);
  EXPECT_NEAR(p.beta, 2.5636319795036948, 1e-9);
  const auto q = TurbulenceParams::from_rytov(0.3);
  EXPECT_NEAR(q.alpha, 8.43171256672561607859888041571, 1e-9);
  EXPECT_NEAR(q.beta, 6.92205321920481336379658043782, 1e-9);
}

// beta falls over the whole of (0, 10]. alpha falls only up to its
// minimum near 1.9672 and rises again in the saturation regime.
TEST(Rytov, MonotoneOnGrid) {
  constexpr double kAlphaMin = 1.96719551191388854;
  auto prev = alpha_beta_from_rytov(0.01);
  for (int k = 2; k <= 1000; ++k) {
    const double s = 0.01 * k;
    const auto cur = alpha_beta_from_rytov(s);
    EXPECT_LT(cur.beta, prev.beta) << "at " << s;
    if (s <= kAlphaMin) {
      EXPECT_LT(cur.alpha, prev.alpha) << "at " << s;
    } else if (s - 0.01 >= kAlphaMin) {
      EXPECT_GT(cur.alpha, prev.alpha) << "at " << s;
    }
    prev = cur;
  }
}

TEST(Rytov, WeakTurbulenceLimitDiverges) {
  const auto p = alpha_beta_from_rytov(1e-12);
  // exp(eps) - 1 ~ eps, so alpha ~ 1/(0.49 eps) and beta ~ 1/(0.51 eps)
  EXPECT_NEAR(p.alpha * 0.49e-12, 1.0, 1e-6);
  EXPECT_NEAR(p.beta * 0.51e-12, 1.0, 1e-6);
}

TEST(Rytov, RejectsNonPositive) {
  EXPECT_THROW(alpha_beta_from_rytov(0.0), std::invalid_argument);
  EXPECT_THROW(alpha_beta_from_rytov(-1.0), std::invalid_argument);
  EXPECT_THROW(alpha_beta_from_rytov(std::nan("")), std::invalid_argument);
}

TEST(Rytov, VarianceFormula) {
  const double k = 2.0 * std::numbers::pi / 1550e-9;
  EXPECT_NEAR(rytov_variance(1e-14, 1550e-9, 1000.0),
              1.23 * 1e-14 * std::pow(k, 7.0 / 6.0) * std::pow(1000.0, 11.0 / 6.0), 1e-15);
  EXPECT_THROW(rytov_variance(0.0, 1.0, 1.0), std::invalid_argument);
}

TEST(Bessel, GoldenValues) {
  struct Case {
    double nu, x, log_k;
  };
  // log K from a 30-digit arbitrary-precision evaluation
  const Case cases[] = {{2.1, 0.5, 2.21010726522083733393065567754},
                        {0.3, 3.0, -3.3467764633239700590384226},
                        {2.1, 2.0 * std::sqrt(7.6), -5.79612831111143603696105701175},
                        {0.0, 1e-3, 1.94928855019219870664522604261},
                        {0.5, 1.0, -0.774208647355272567636902385053},
                        {10.5, 0.1, 44.7024037573394473850581190584},
                        {40.0, 300.0, -299.968168709287575478807946167},
                        {1e-3, 1.5, -1.54268799883227350590471591119},
                        {3.7, 700.0, -703.04015568409385718802755913},
                        {200.0, 0.5, 1134.49908079917294733068920946},
                        {0.2, 1000.0, -1003.22819123440059450377239406},
                        {2.1, 1e-8, 39.4913291994603941418476650266}};
  for (const auto& c : cases) {
    EXPECT_NEAR(log_bessel_k(c.nu, c.x), c.log_k, 1e-12 * std::max(1.0, std::abs(c.log_k)))
        << "nu=" << c.nu << " x=" << c.x;
  }
  EXPECT_NEAR(bessel_k(2.1, 0.5), 9.116694244816102, 1e-13);
  EXPECT_NEAR(bessel_k(0.3, 3.0), 0.0351976322831403, 1e-15);
}

TEST(Bessel, MatchesStandardLibraryAndQuadratureAt50Points) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> order(0.0, 6.0), logx(std::log(0.05), std::log(30.0));
  for (int k = 0; k < 50; ++k) {
    const double nu = order(rng), x = std::exp(logx(rng));
    const double got = bessel_k(nu, x);
    EXPECT_NEAR(got, std::cyl_bessel_k(nu, x), 1e-11 * got) << "nu=" << nu << " x=" << x;
    EXPECT_NEAR(got, bessel_k_quadrature(nu, x), 1e-9 * got) << "nu=" << nu << " x=" << x;
  }
}

TEST(Bessel, SymmetricInOrderAndAcrossBranchPoints) {
  EXPECT_DOUBLE_EQ(bessel_k(-2.1, 0.7), bessel_k(2.1, 0.7));
  // the series / continued-fraction switch at x = 2 and the small-mu
  // Taylor switch at |mu| = 1e-2 must be continuous
  for (double nu : {0.0, 0.004, 0.0099, 0.01, 0.011, 0.37, 1.5, 2.49}) {
    const double below = bessel_k(nu, std::nextafter(2.0, 0.0));
    const double above = bessel_k(nu, 2.0);
    EXPECT_NEAR(below, above, 1e-13 * above) << nu;
    EXPECT_NEAR(bessel_k(nu, 2.0), std::cyl_bessel_k(nu, 2.0), 1e-13 * above) << nu;
  }
}

TEST(Bessel, RejectsBadArguments) {
  EXPECT_THROW(bessel_k(1.0, 0.0), std::domain_error);
  EXPECT_THROW(bessel_k(1.0, -1.0), std::domain_error);
  EXPECT_THROW(log_bessel_k(std::nan(""), 1.0), std::domain_error);
}

TEST(GammaGamma, PdfGoldenValues) {
  EXPECT_NEAR(gg_pdf(0.5, kPaper), 0.733583171534988144974230335113327, 1e-13);
  EXPECT_NEAR(gg_pdf(1.0, kPaper), 0.417813969591894564778238655041484, 1e-13);
  EXPECT_NEAR(gg_pdf(2.0, kPaper), 0.125799626929338093406854622018472, 1e-13);
}

TEST(GammaGamma, PdfPositiveAndRejectsNonPositive) {
  for (double i = 1e-6; i < 60.0; i *= 1.3) EXPECT_GT(gg_pdf(i, kPaper), 0.0) << i;
  EXPECT_THROW(gg_pdf(0.0, kPaper), std::domain_error);
  EXPECT_THROW(gg_pdf(-1.0, kPaper), std::domain_error);
  EXPECT_THROW(gg_pdf(1.0, {0.0, 1.0}), std::invalid_argument);
}

TEST(GammaGamma, NormalisedWithUnitMeanAndKnownScintillation) {
  std::vector<TurbulenceParams> all{kPaper};
  all.insert(all.end(), std::begin(kOthers), std::end(kOthers));
  for (const auto& p : all) {
    EXPECT_NEAR(integrate_moment_inf(p, 0), 1.0, 1e-6) << p.alpha << "," << p.beta;
    EXPECT_NEAR(integrate_moment_inf(p, 1), 1.0, 1e-6) << p.alpha << "," << p.beta;
    EXPECT_NEAR(integrate_moment_inf(p, 2) - 1.0, scintillation_index(p), 1e-6);
  }
  EXPECT_NEAR(scintillation_index(kPaper), 0.9078947368421052, 1e-15);
}

TEST(GammaGamma, CdfMatchesIndependentQuadrature) {
  EXPECT_NEAR(gg_cdf(0.5, kPaper), 0.356184710141191575989075167136, 1e-10);
  EXPECT_NEAR(gg_cdf(3.0, kPaper), 0.957382382916005609582343657921, 1e-10);
  EXPECT_NEAR(gg_cdf(0.1, kPaper), 0.040104428874074255255583651404, 1e-10);
  // alpha = 2.5, beta = 0.8 has an integrable singularity at zero
  EXPECT_NEAR(gg_cdf(0.05, kOthers[1]), 0.1102308338267270151078328, 1e-10);
  EXPECT_NEAR(gg_cdf(0.3, kOthers[1]), 0.3800301905742223661085604, 1e-10);
  EXPECT_NEAR(gg_cdf(1.0, kOthers[1]), 0.6942263569020368000835008, 1e-10);
  for (double i : {0.05, 0.3, 0.9, 1.0, 1.1, 2.5, 7.0}) {
    EXPECT_NEAR(gg_cdf(i, kOthers[1]), integrate_moment(kOthers[1], 0, 0.0, i), 1e-9) << i;
  }
  EXPECT_EQ(gg_cdf(0.0, kPaper), 0.0);
  EXPECT_EQ(gg_cdf(-3.0, kPaper), 0.0);
  double prev = 0.0;
  for (double i = 0.01; i < 20.0; i *= 1.5) {
    const double c = gg_cdf(i, kPaper);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

namespace {

// Kolmogorov-Smirnov statistic of sorted samples against gg_cdf. The CDF
// is accumulated piecewise between consecutive samples.
double ks_statistic(std::vector<double> xs, const TurbulenceParams& p) {
  std::sort(xs.begin(), xs.end());
  boost::math::quadrature::tanh_sinh<double> integrator;
  const auto f = [&](double t) { return t > 0.0 ? gg_pdf(t, p) : 0.0; };
  double cdf = gg_cdf(xs.front(), p), d = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k > 0 && xs[k] > xs[k - 1]) cdf += integrator.integrate(f, xs[k - 1], xs[k]);
    d = std::max({d, (k + 1) / n - cdf, cdf - k / n});
  }
  return d;
}

}  // namespace

TEST(Sampler, MeanAndScintillationOverMillionDraws) {
  std::mt19937_64 rng(2024);
  double sum = 0.0, sum2 = 0.0;
  const int n = 1000000;
  for (int k = 0; k < n; ++k) {
    const double v = sample_channel(kPaper, 1, rng)[0];
    EXPECT_GT(v, 0.0);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double si = (sum2 / n) / (mean * mean) - 1.0;
  EXPECT_GE(mean, 0.995);
  EXPECT_LE(mean, 1.005);
  EXPECT_NEAR(si, scintillation_index(kPaper), 0.02 * scintillation_index(kPaper));
}

TEST(Sampler, KolmogorovSmirnovAgainstPdf) {
  const double critical = 1.628 / std::sqrt(1e5);  // 1% level, large n
  std::vector<TurbulenceParams> all{kPaper};
  all.insert(all.end(), std::begin(kOthers), std::end(kOthers));
  std::uint64_t seed = 11;
  for (const auto& p : all) {
    std::mt19937_64 rng(seed++);
    const auto xs = sample_channel(p, 100000, rng);
    EXPECT_LT(ks_statistic(xs, p), critical) << p.alpha << "," << p.beta;
  }
}

TEST(Sampler, KolmogorovSmirnovRejectsWrongParameters) {
  std::mt19937_64 rng(3);
  const auto xs = sample_channel(kPaper, 100000, rng);
  EXPECT_GT(ks_statistic(xs, {4.0, 3.0}), 1.628 / std::sqrt(1e5));
}

TEST(Link, NoiseSigmaConvention) {
  EXPECT_DOUBLE_EQ(noise_sigma(0.0), 1.0);
  EXPECT_NEAR(noise_sigma(20.0), 0.1, 1e-15);
  EXPECT_NEAR(1.0 / std::pow(noise_sigma(7.0), 2), std::pow(10.0, 0.7), 1e-12);
}

TEST(Link, NoiselessLimitRecoversBits) {
  for (auto sys : {System::kSiso, System::kSimo}) {
    LinkConfig cfg{sys, 10, 8, kPaper};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto b = generate_block(cfg, 300.0, seed);
      ASSERT_EQ(b.h.size(), cfg.receive_antennas());
      for (std::size_t m = 0; m < b.h.size(); ++m) {
        for (std::size_t l = 0; l < cfg.block_len; ++l) {
          EXPECT_EQ(b.x[m * cfg.block_len + l] / b.h[m] >= 0.5, b.s[l] == 1);
        }
      }
    }
  }
}

TEST(Link, SimoRowsShareOneChannelAcrossTheBlock) {
  LinkConfig cfg{System::kSimo, 10, 8, kPaper};
  const auto b = generate_block(cfg, 30.0, 99);
  // residual after removing h[m] s[l] is pure noise: sigma-scale only
  for (std::size_t m = 0; m < 8; ++m) {
    for (std::size_t l = 0; l < 10; ++l) {
      EXPECT_LT(std::abs(b.x[m * 10 + l] - b.h[m] * b.s[l]), 6.0 * b.sigma);
    }
  }
  // and bits are shared by every antenna: with sigma -> 0 the per-antenna
  // ratio x / h is identical along each column
  const auto q = generate_block(cfg, 400.0, 99);
  for (std::size_t l = 0; l < 10; ++l) {
    for (std::size_t m = 1; m < 8; ++m) {
      EXPECT_NEAR(q.x[m * 10 + l] / q.h[m], q.x[l] / q.h[0], 1e-15);
    }
  }
}

TEST(Link, BitMarginal) {
  DatasetStream stream({System::kSiso, 10, 1, kPaper}, {10.0}, 5, DatasetStream::Mode::kFixed);
  std::size_t ones = 0, total = 0;
  while (total < 1000000) {
    const auto b = stream.next();
    for (auto s : b.s) ones += s;
    total += b.s.size();
  }
  const double frac = static_cast<double>(ones) / total;
  EXPECT_GE(frac, 0.498);
  EXPECT_LE(frac, 0.502);
}

TEST(Link, AntennaChannelsUncorrelated) {
  DatasetStream stream({System::kSimo, 2, 8, kPaper}, {10.0}, 17, DatasetStream::Mode::kFixed);
  const int n = 100000;
  std::vector<double> a(n), b(n);
  for (int k = 0; k < n; ++k) {
    const auto blk = stream.next();
    a[k] = blk.h[0];
    b[k] = blk.h[5];
  }
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (int k = 0; k < n; ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  EXPECT_LT(std::abs(sab / std::sqrt(saa * sbb)), 0.01);
}

TEST(Link, ReproducibleFromStoredSeed) {
  LinkConfig cfg{System::kSimo, 10, 8, kPaper};
  DatasetStream stream(cfg, {0, 5, 10, 15}, 42);
  for (int k = 0; k < 50; ++k) {
    const auto b = stream.next();
    const auto again = generate_block(cfg, b.snr_db, b.seed, b.block);
    EXPECT_EQ(again.h, b.h);
    EXPECT_EQ(again.s, b.s);
    EXPECT_EQ(again.x, b.x);
    const auto direct = stream.at(b.block);
    EXPECT_EQ(direct.x, b.x);
  }
}

TEST(Link, TrainingModeUsesWholeGridUniformly) {
  const std::vector<double> grid{0, 5, 10, 15, 20};
  DatasetStream stream({System::kSiso, 10, 1, kPaper}, grid, 8);
  std::map<double, int> counts;
  const int n = 50000;
  for (int k = 0; k < n; ++k) ++counts[stream.next().snr_db];
  ASSERT_EQ(counts.size(), grid.size());
  // binomial(n, 1/5): 5 standard deviations is about 450
  for (const auto& [snr, c] : counts) EXPECT_NEAR(c, n / 5, 450) << snr;
}

TEST(Link, RejectsBadConfigs) {
  EXPECT_THROW(DatasetStream({System::kSiso, 10, 1, kPaper}, {}, 1), std::invalid_argument);
  EXPECT_THROW(DatasetStream({System::kSiso, 0, 1, kPaper}, {1.0}, 1), std::invalid_argument);
  EXPECT_THROW(DatasetStream({System::kSimo, 10, 0, kPaper}, {1.0}, 1), std::invalid_argument);
  EXPECT_THROW(DatasetStream({System::kSiso, 10, 1, kPaper}, {1.0, 2.0}, 1,
                             DatasetStream::Mode::kFixed),
               std::invalid_argument);
  EXPECT_THROW(system_from_string("MIMO"), std::invalid_argument);
}

TEST(Link, BatchSourceShapes) {
  LinkBatchSource siso(DatasetStream({System::kSiso, 10, 1, kPaper}, {10.0}, 1));
  const auto a = siso.next(4);
  EXPECT_EQ(a.inputs.shape(), (fsolc::nn::Shape{4, 10}));
  EXPECT_EQ(a.targets.shape(), (fsolc::nn::Shape{4, 10}));
  DatasetStream ref({System::kSimo, 10, 8, kPaper}, {10.0}, 1);
  LinkBatchSource simo(ref);
  const auto b = simo.next(3);
  EXPECT_EQ(b.inputs.shape(), (fsolc::nn::Shape{3, 8, 10}));
  const auto first = ref.next(), second = ref.next();
  for (std::size_t k = 0; k < 80; ++k) EXPECT_EQ(b.inputs[80 + k], second.x[k]);
  for (std::size_t l = 0; l < 10; ++l) EXPECT_EQ(b.targets[l], first.s[l]);
}

TEST(Dataset, BinaryRoundTripAndCorruption) {
  LinkConfig cfg{System::kSimo, 4, 3, kPaper};
  DatasetStream stream(cfg, {0.0, 10.0}, 77);
  std::vector<LinkSample> blocks;
  for (int k = 0; k < 20; ++k) blocks.push_back(stream.next());
  std::stringstream buf;
  write_dataset(buf, cfg, blocks);
  const std::string bytes = buf.str();
  LinkConfig back_cfg;
  std::istringstream in(bytes);
  const auto back = read_dataset(in, &back_cfg);
  ASSERT_EQ(back.size(), blocks.size());
  EXPECT_EQ(back_cfg.system, cfg.system);
  EXPECT_EQ(back_cfg.antennas, 3u);
  EXPECT_EQ(back_cfg.turbulence.beta, 1.9);
  for (std::size_t k = 0; k < back.size(); ++k) {
    EXPECT_EQ(back[k].seed, blocks[k].seed);
    EXPECT_EQ(back[k].snr_db, blocks[k].snr_db);
    EXPECT_EQ(back[k].x, blocks[k].x);
    EXPECT_EQ(back[k].s, blocks[k].s);
  }
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_dataset(truncated), fsolc::nn::FormatError);
  std::istringstream trailing(bytes + "x");
  EXPECT_THROW(read_dataset(trailing), fsolc::nn::FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream magic(bad);
  EXPECT_THROW(read_dataset(magic), fsolc::nn::FormatError);
}

TEST(Dataset, CsvLayout) {
  LinkConfig cfg{System::kSiso, 3, 1, kPaper};
  const auto b = generate_block(cfg, 10.0, 5, 0);
  std::ostringstream out;
  write_dataset_csv(out, cfg, {b});
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "block,seed,snr_db,sigma,h0,s0,s1,s2,x0,x1,x2");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 10);
  EXPECT_EQ(row.substr(0, 4), "0,5,");
}
