#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "stgp/mcmc.hpp"
#include "stgp/simdata.hpp"
#include "stgp/validation.hpp"

using namespace stgp;

namespace {

// Batch-means standard error of the mean of a correlated series.
double batch_se(const std::vector<double> &x, std::size_t batches = 50) {
  const std::size_t len = x.size() / batches;
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += x[b * len + i];
    means[b] = s / static_cast<double>(len);
  }
  double m = 0.0;
  for (double v : means) m += v;
  m /= static_cast<double>(batches);
  double var = 0.0;
  for (double v : means) var += (v - m) * (v - m);
  var /= static_cast<double>(batches - 1);
  return std::sqrt(var / static_cast<double>(batches));
}

double mean_of(const std::vector<double> &x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

Dataset empty_dataset(std::shared_ptr<const SpatialDomain> domain, Eigen::Index q) {
  Dataset d;
  d.domain = std::move(domain);
  d.y.resize(0);
  d.W.resize(0, q);
  d.X.resize(0, d.domain->size());
  d.normalization = NormalizationRecord::identity(q, d.domain->size());
  return d;
}

struct Small {
  std::shared_ptr<const SpatialDomain> domain;
  SpatialSetup spatial;
};

Small small(int side, int knots) {
  Small s;
  s.domain = std::make_shared<const SpatialDomain>(grid_locations(side));
  s.spatial = make_spatial_setup(*s.domain, {knots, knots});
  return s;
}

// Five-peaks style signal on an m x m grid, normalized.
Dataset signal_dataset(int m, int n, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  const auto beta0 = make_true_beta(BetaShape::kFivePeaks, m);
  const Eigen::MatrixXd X = sample_exp_images(m, 3.0, n, rng);
  Dataset d;
  d.domain = std::make_shared<const SpatialDomain>(grid_locations(m));
  d.y = generate_gaussian_response(X, beta0.beta, sigma, rng);
  d.W.resize(n, 0);
  d.X = X;
  d.normalization = NormalizationRecord::identity(0, m * m);
  return normalize_dataset(d, ResponseMode::kGaussian);
}

} // namespace

TEST(McmcConfig, Validation) {
  McmcConfig c;
  EXPECT_NO_THROW(c.check());
  c.burn_in = c.iterations;
  EXPECT_THROW(c.check(), ConfigError);
  c = McmcConfig{};
  c.target_acceptance = 1.0;
  EXPECT_THROW(c.check(), ConfigError);
  c = McmcConfig{};
  c.lambda_lower = 2.0;
  c.lambda_upper = 1.0;
  EXPECT_THROW(c.check(), ConfigError);
}

TEST(LambdaBounds, FromFraction) {
  auto [lo, hi] = lambda_bounds_from_fraction(0.20);
  EXPECT_NEAR(lo, 1.1503, 1e-3);
  EXPECT_NEAR(hi, 1.4395, 1e-3);
  EXPECT_NEAR(lo, -normal_quantile(0.125), 1e-12);
  std::tie(lo, hi) = lambda_bounds_from_fraction(0.05);
  EXPECT_TRUE(std::isfinite(hi));
  EXPECT_NEAR(hi, -normal_quantile(1e-4), 1e-12);
  std::tie(lo, hi) = lambda_bounds_from_fraction(0.95);
  EXPECT_EQ(lo, 0.0);
  std::tie(lo, hi) = lambda_bounds_from_fraction(1.0);
  EXPECT_EQ(lo, 0.0);
  EXPECT_LE(lo, hi);
}

TEST(BetaProposal, MomentMatching) {
  const auto [a, b] = beta_proposal_shapes(0.8, 0.05);
  EXPECT_NEAR(a / (a + b), 0.8, 1e-12);
  EXPECT_NEAR(std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1))), 0.05, 1e-12);
  const auto [a2, b2] = beta_proposal_shapes(0.99, 0.5); // infeasible sd is shrunk
  EXPECT_GT(a2, 0.0);
  EXPECT_GT(b2, 0.0);
  EXPECT_NEAR(a2 / (a2 + b2), 0.99, 1e-9);
}

TEST(SortedQuantile, TypeSeven) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  EXPECT_EQ(Sampler<>::sorted_quantile(v, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(Sampler<>::sorted_quantile(v, 0.025), 1.1);
  EXPECT_DOUBLE_EQ(Sampler<>::sorted_quantile(v, 0.975), 4.9);
}

TEST(UpdateAlpha, ConjugateNormalFormula) {
  const auto sys = small(3, 2);
  Dataset d;
  d.domain = sys.domain;
  d.y = Eigen::VectorXd::Zero(100);
  d.y.head(50).setOnes(); // sum y = 50
  d.W = Eigen::MatrixXd::Ones(100, 1);
  d.X = Eigen::MatrixXd::Zero(100, 9);
  d.normalization = NormalizationRecord::identity(1, 9);
  McmcConfig c;
  Sampler<> s(d, sys.spatial.grid, sys.spatial.kernel, c);
  ModelState st;
  st.alpha = Eigen::VectorXd::Zero(1);
  st.a = Eigen::VectorXd::Zero(4);
  st.sigma2 = 1.0;
  s.set_state(st);
  Rng rng(1);
  const int N = 40000;
  std::vector<double> draws(N);
  for (int t = 0; t < N; ++t) {
    s.update_alpha(rng);
    draws[static_cast<std::size_t>(t)] = s.state().alpha(0);
  }
  const double mean = 50.0 / 100.01, var = 1.0 / 100.01;
  EXPECT_NEAR(mean, 0.49995, 1e-5);
  EXPECT_NEAR(mean_of(draws), mean, 3 * std::sqrt(var / N));
  double ss = 0.0;
  for (double v : draws) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(ss / N, var, 3 * var * std::sqrt(2.0 / N));
  // eta stays consistent with alpha.
  EXPECT_NEAR((s.state().eta.array() - s.state().alpha(0)).abs().maxCoeff(), 0.0, 1e-14);
}

TEST(UpdateAlpha, NoDataGivesPrior) {
  const auto sys = small(3, 2);
  Sampler<> s(empty_dataset(sys.domain, 1), sys.spatial.grid, sys.spatial.kernel, McmcConfig{});
  Rng rng(2);
  s.initialize(rng);
  const int N = 40000;
  double sum = 0.0, sq = 0.0;
  for (int t = 0; t < N; ++t) {
    s.update_alpha(rng);
    sum += s.state().alpha(0);
    sq += s.state().alpha(0) * s.state().alpha(0);
  }
  EXPECT_NEAR(sum / N, 0.0, 3 * std::sqrt(100.0 / N));
  EXPECT_NEAR(sq / N, 100.0, 3 * 100.0 * std::sqrt(2.0 / N));
}

TEST(UpdateAlpha, GibbsMatchesQuadrature) {
  // Toy data, beta = 0: alternate alpha and sigma^2 updates; compare the
  // alpha marginal with p(alpha | y) ~ N(alpha; 0, 100) (b + SSR/2)^-(a + n/2).
  const auto sys = small(3, 2);
  Dataset d;
  d.domain = sys.domain;
  d.y = Eigen::VectorXd(5);
  d.y << 0.4, 1.9, 1.1, -0.3, 2.2;
  d.W = Eigen::MatrixXd::Ones(5, 1);
  d.X = Eigen::MatrixXd::Zero(5, 9);
  d.normalization = NormalizationRecord::identity(1, 9);
  Sampler<> s(d, sys.spatial.grid, sys.spatial.kernel, McmcConfig{});
  ModelState st;
  st.alpha = Eigen::VectorXd::Zero(1);
  st.a = Eigen::VectorXd::Zero(4);
  st.sigma2 = 1.0;
  s.set_state(st);

  double z = 0.0, m1 = 0.0, m2 = 0.0;
  for (double a = -10.0; a <= 12.0; a += 1e-4) {
    const double ssr = (d.y.array() - a).square().sum();
    const double w = std::exp(-a * a / 200.0) * std::pow(0.1 + 0.5 * ssr, -(0.1 + 2.5));
    z += w;
    m1 += w * a;
    m2 += w * a * a;
  }
  m1 /= z;
  m2 /= z;

  Rng rng(3);
  const int N = 100000;
  std::vector<double> x1(N), x2(N);
  for (int t = 0; t < N; ++t) {
    s.update_alpha(rng);
    s.update_sigma2(rng);
    x1[static_cast<std::size_t>(t)] = s.state().alpha(0);
    x2[static_cast<std::size_t>(t)] = s.state().alpha(0) * s.state().alpha(0);
  }
  EXPECT_NEAR(mean_of(x1), m1, 3 * batch_se(x1));
  EXPECT_NEAR(mean_of(x2), m2, 3 * batch_se(x2));
}

TEST(UpdateSigma2, ConjugateInverseGamma) {
  const auto sys = small(3, 2);
  Dataset d;
  d.domain = sys.domain;
  d.y = Eigen::Vector4d(1.0, -0.5, 0.5, std::sqrt(0.5)); // SSR about eta = 0 is 2
  d.W.resize(4, 0);
  d.X = Eigen::MatrixXd::Zero(4, 9);
  d.normalization = NormalizationRecord::identity(0, 9);
  Sampler<> s(d, sys.spatial.grid, sys.spatial.kernel, McmcConfig{});
  ModelState st;
  st.alpha.resize(0);
  st.a = Eigen::VectorXd::Zero(4);
  s.set_state(st);
  ASSERT_NEAR((d.y - s.state().eta).squaredNorm(), 2.0, 1e-15);
  Rng rng(4);
  const int N = 200000;
  double sum = 0.0, prec = 0.0;
  for (int t = 0; t < N; ++t) {
    s.update_sigma2(rng);
    sum += s.state().sigma2;
    prec += 1.0 / s.state().sigma2;
  }
  // InvGamma(2.1, 1.1): mean 1, variance 10; precision ~ Gamma(2.1, rate 1.1).
  EXPECT_NEAR(sum / N, 1.0, 3 * std::sqrt(10.0 / N));
  EXPECT_NEAR(prec / N, 2.1 / 1.1, 3 * std::sqrt(2.1 / (1.1 * 1.1) / N));
}

TEST(UpdateSigma2, NoDataGivesPrior) {
  const auto sys = small(3, 2);
  Sampler<> s(empty_dataset(sys.domain, 0), sys.spatial.grid, sys.spatial.kernel, McmcConfig{});
  Rng rng(5);
  s.initialize(rng);
  const int N = 100000;
  double prec = 0.0;
  for (int t = 0; t < N; ++t) {
    s.update_sigma2(rng);
    prec += 1.0 / s.state().sigma2;
  }
  EXPECT_NEAR(prec / N, 1.0, 3 * std::sqrt(10.0 / N)); // Gamma(0.1, rate 0.1)
}

TEST(UpdateSigma2, SkippedInProbitMode) {
  const auto sys = small(3, 2);
  Dataset d;
  d.domain = sys.domain;
  d.y = Eigen::Vector4d(1, 0, 1, 0);
  d.W.resize(4, 0);
  d.X = Eigen::MatrixXd::Zero(4, 9);
  McmcConfig c;
  c.mode = ResponseMode::kProbit;
  Sampler<> s(d, sys.spatial.grid, sys.spatial.kernel, c);
  Rng rng(6);
  s.initialize(rng);
  const double before = s.state().sigma2;
  s.update_sigma2(rng);
  EXPECT_EQ(s.state().sigma2, before);
  EXPECT_EQ(s.state().noise_variance(), 1.0);
}

TEST(UpdateSigmaA, HalfNormalWithoutSignal) {
  const auto sys = small(4, 2);
  Rng rng(7);
  Dataset d = validation::random_dataset(sys.domain, 20, 0, rng);
  Sampler<> s(d, sys.spatial.grid, sys.spatial.kernel, McmcConfig{});
  ModelState st;
  st.alpha.resize(0);
  st.a = Eigen::VectorXd::Zero(4); // g = 0 everywhere
  st.sigma2 = 1.0;
  s.set_state(st);
  const int N = 100000;
  double sum = 0.0;
  bool positive = true;
  for (int t = 0; t < N; ++t) {
    s.update_sigma_a(rng);
    sum += s.state().sigma_a;
    positive &= s.state().sigma_a > 0.0;
  }
  EXPECT_TRUE(positive);
  EXPECT_NEAR(sum / N, std::sqrt(2.0 / std::numbers::pi), 3 * std::sqrt((1.0 - 2.0 / std::numbers::pi) / N));
}

TEST(UpdateSigmaA, RecoversScaleFromNoiselessSignal) {
  const auto sys = small(6, 3);
  Rng rng(8);
  Dataset d = validation::random_dataset(sys.domain, 60, 0, rng);
  Sampler<> s(d, sys.spatial.grid, sys.spatial.kernel, McmcConfig{});
  ModelState st;
  st.alpha.resize(0);
  st.a = Eigen::VectorXd(9);
  for (auto &v : st.a) v = 2.0 * rng.normal();
  st.sigma_a = 2.0;
  st.lambda = 0.2;
  st.sigma2 = 1e-4;
  s.set_state(st);
  s.set_response(s.state().eta); // noiseless data generated at sigma_a = 2
  double sum = 0.0;
  bool positive = true;
  for (int t = 0; t < 5000; ++t) {
    s.update_sigma_a(rng);
    sum += s.state().sigma_a;
    positive &= s.state().sigma_a > 0.0;
  }
  EXPECT_TRUE(positive);
  EXPECT_GT(sum / 5000, 1.8);
  EXPECT_LT(sum / 5000, 2.2);
}

TEST(UpdateTheta, TinyStepsAreAccepted) {
  const auto sys = small(6, 3);
  Rng rng(9);
  Dataset d = validation::random_dataset(sys.domain, 30, 0, rng);
  McmcConfig c;
  c.theta_proposal_sd = 1e-7;
  c.adapt = false;
  Sampler<> s(d, sys.spatial.grid, sys.spatial.kernel, c);
  s.initialize(rng);
  int acc = 0;
  for (int t = 0; t < 200; ++t) acc += s.update_theta(rng);
  EXPECT_GE(acc, 195);
}

TEST(UpdateTheta, PriorOnlyChainMatchesBetaPrior) {
  const auto sys = small(4, 3);
  McmcConfig c;
  c.adapt = false;
  c.theta_proposal_sd = 0.05;
  Sampler<> s(empty_dataset(sys.domain, 0), sys.spatial.grid, sys.spatial.kernel, c);
  Rng rng(10);
  s.initialize(rng);
  std::vector<double> th;
  for (int t = 0; t < 60000; ++t) {
    s.update_knots(rng);
    s.update_theta(rng);
    if (t >= 1000) th.push_back(s.state().theta);
  }
  EXPECT_NEAR(mean_of(th), 10.0 / 11.0, 3 * batch_se(th));
}

TEST(UpdateLambda, StaysInsideBoundsAndSmallStepsAccepted) {
  const auto sys = small(6, 3);
  Rng rng(11);
  Dataset d = validation::random_dataset(sys.domain, 30, 0, rng);
  McmcConfig c;
  c.adapt = false;
  c.lambda_lower = 0.2;
  c.lambda_upper = 0.3;
  c.lambda_proposal_sd = 50.0;
  {
    Sampler<> s(d, sys.spatial.grid, sys.spatial.kernel, c);
    s.initialize(rng);
    int acc = 0;
    for (int t = 0; t < 2000; ++t) {
      acc += s.update_lambda(rng);
      ASSERT_GE(s.state().lambda, 0.2);
      ASSERT_LE(s.state().lambda, 0.3);
    }
    EXPECT_LT(acc, 40); // candidates land in [0.2, 0.3] with probability < 0.2%
  }
  c.lambda_proposal_sd = 1e-12;
  Sampler<> s(d, sys.spatial.grid, sys.spatial.kernel, c);
  s.initialize(rng);
  int acc = 0;
  for (int t = 0; t < 200; ++t) acc += s.update_lambda(rng);
  EXPECT_GE(acc, 198);
}

TEST(UpdateLambda, PriorOnlyChainIsUniform) {
  const auto sys = small(4, 3);
  McmcConfig c;
  c.adapt = false;
  c.lambda_lower = 0.5;
  c.lambda_upper = 1.5;
  c.lambda_proposal_sd = 0.5;
  Sampler<> s(empty_dataset(sys.domain, 0), sys.spatial.grid, sys.spatial.kernel, c);
  Rng rng(12);
  s.initialize(rng);
  std::vector<double> lam;
  for (int t = 0; t < 100000; ++t) {
    s.update_lambda(rng);
    if (t % 25 == 0) lam.push_back(s.state().lambda);
  }
  std::sort(lam.begin(), lam.end());
  double ks = 0.0;
  const double N = static_cast<double>(lam.size());
  for (std::size_t i = 0; i < lam.size(); ++i) {
    const double F = lam[i] - 0.5;
    ks = std::max({ks, std::abs(F - i / N), std::abs(F - (i + 1) / N)});
  }
  EXPECT_LT(ks, 1.628 / std::sqrt(N)); // 99th percentile of the KS null
}

TEST(UpdateKnots, FlatLikelihoodAcceptsAlmostEverything) {
  const auto sys = small(10, 5);
  Rng rng(13);
  Dataset d = normalize_dataset(validation::random_dataset(sys.domain, 50, 0, rng), ResponseMode::kGaussian);
  McmcConfig c;
  c.iterations = 600;
  c.burn_in = 100;
  c.lambda_lower = c.lambda_upper = 0.5;
  c.seed = 14;
  const ChainSummary out = run_chain(d, sys.spatial.grid, sys.spatial.kernel, c);
  EXPECT_GT(out.acceptance.knots, 0.9);
}

TEST(UpdateKnots, AcceptanceEqualsFullMetropolisHastingsRatio) {
  const auto sys = small(10, 5);
  Rng rng(15);
  const Dataset d = validation::random_dataset(sys.domain, 30, 1, rng);
  const CarStructure car(sys.spatial.grid, 0.85);
  const KernelSystem ks = standardize_kernels(sys.spatial.kernel, car);
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    ModelState s = validation::random_state(d, ks, 25, rng);
    s.a = sample_car(car, rng);
    refresh_caches(s, d, ks);
    const auto l = static_cast<Eigen::Index>(rng.index(25));
    const auto cond = car_conditional(s.a, l, car);
    const double cand = cond.mean + std::sqrt(cond.variance) * rng.normal();
    ModelState m = s;
    m.a(l) = cand;
    refresh_caches(m, d, ks);
    // Full ratio: likelihood x joint CAR prior x reverse/forward proposal densities.
    const double full = gaussian_loglik(m, d) - gaussian_loglik(s, d) + car.log_density(m.a) - car.log_density(s.a) +
                        log_normal_pdf(s.a(l), cond.mean, cond.variance) -
                        log_normal_pdf(cand, cond.mean, cond.variance);
    const double fast = loglik_delta_knot(s, d, ks, l, cand);
    worst = std::max(worst, std::abs(full - fast) / std::max(1.0, std::abs(full)));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(UpdateKnots, ConjugateTwoKnotPosterior) {
  // lambda = 0 with theta, sigma_a, sigma^2 held fixed: a | y is Gaussian with
  // precision Q + sigma_a^2 B^T B / sigma^2, B = p^{-1/2} X K~.
  Eigen::MatrixXd S(6, 1);
  for (int j = 0; j < 6; ++j) S(j, 0) = j;
  auto domain = std::make_shared<const SpatialDomain>(S);
  const auto spatial = make_spatial_setup(*domain, {2}, 3.0);
  Rng rng(16);
  Dataset d = validation::random_dataset(domain, 8, 0, rng);
  McmcConfig c;
  c.theta_init = 0.6;
  Sampler<> s(d, spatial.grid, spatial.kernel, c);
  ModelState st;
  st.alpha.resize(0);
  st.a = Eigen::Vector2d(0.0, 0.0);
  st.theta = 0.6;
  st.sigma_a = 1.5;
  st.sigma2 = 0.7;
  s.set_state(st);

  const Eigen::MatrixXd B = d.X * Eigen::MatrixXd(s.kernels().standardized) / std::sqrt(6.0);
  const Eigen::MatrixXd P = Eigen::MatrixXd(s.car().precision()) + 1.5 * 1.5 * B.transpose() * B / 0.7;
  const Eigen::MatrixXd V = P.inverse();
  const Eigen::VectorXd mu = V * (1.5 * B.transpose() * d.y / 0.7);

  std::vector<double> a1, a1sq;
  for (int t = 0; t < 200000; ++t) {
    s.update_knots(rng);
    a1.push_back(s.state().a(0));
    a1sq.push_back(s.state().a(0) * s.state().a(0));
  }
  EXPECT_NEAR(mean_of(a1), mu(0), 3 * batch_se(a1));
  EXPECT_NEAR(mean_of(a1sq), V(0, 0) + mu(0) * mu(0), 3 * batch_se(a1sq));
}

TEST(RunChain, GpModeBitwiseEqualsIdentityThreshold) {
  const Dataset d = signal_dataset(12, 40, 2.0, 17);
  const auto spatial = make_spatial_setup(*d.domain, {6, 6});
  McmcConfig c;
  c.iterations = 300;
  c.burn_in = 100;
  c.seed = 18;
  const ChainSummary soft = run_chain<SoftThreshold>(d, spatial.grid, spatial.kernel, c);
  const ChainSummary ident = run_chain<IdentityThreshold>(d, spatial.grid, spatial.kernel, c);
  EXPECT_EQ(soft.beta_mean, ident.beta_mean);
  EXPECT_EQ(soft.beta_samples, ident.beta_samples);
  EXPECT_EQ(soft.traces.theta, ident.traces.theta);
  EXPECT_EQ(soft.traces.sigma2, ident.traces.sigma2);
  EXPECT_TRUE(std::all_of(soft.traces.lambda.begin(), soft.traces.lambda.end(), [](double l) { return l == 0.0; }));
  EXPECT_TRUE((soft.nonzero_freq.array() > 0.99).all());
}

TEST(RunChain, DeterministicAndWellFormed) {
  const Dataset d = signal_dataset(12, 40, 2.0, 19);
  const auto spatial = make_spatial_setup(*d.domain, {6, 6});
  McmcConfig c;
  c.iterations = 400;
  c.burn_in = 100;
  c.thin = 3;
  c.lambda_lower = 0.2;
  c.lambda_upper = 0.8;
  c.seed = 20;
  const ChainSummary a = run_chain(d, spatial.grid, spatial.kernel, c);
  const ChainSummary b = run_chain(d, spatial.grid, spatial.kernel, c);
  EXPECT_EQ(a.beta_mean, b.beta_mean);
  EXPECT_EQ(a.nonzero_freq, b.nonzero_freq);
  EXPECT_EQ(a.traces.lambda, b.traces.lambda);
  EXPECT_EQ(a.ci_lower, b.ci_lower);
  EXPECT_EQ(a.traces.size(), 100u);
  EXPECT_EQ(a.beta_samples.cols(), 30);
  EXPECT_TRUE((a.nonzero_freq.array() >= 0.0).all() && (a.nonzero_freq.array() <= 1.0).all());
  EXPECT_TRUE((a.ci_lower.array() <= a.ci_upper.array()).all());
  for (double l : a.traces.lambda) {
    EXPECT_GE(l, 0.2);
    EXPECT_LE(l, 0.8);
  }
}

TEST(RunChain, AdaptationFreezesAfterBurnIn) {
  const Dataset d = signal_dataset(12, 40, 2.0, 21);
  const auto spatial = make_spatial_setup(*d.domain, {6, 6});
  McmcConfig c;
  c.iterations = 500;
  c.burn_in = 200;
  c.lambda_lower = 0.2;
  c.lambda_upper = 0.8;
  Sampler<> s(d, spatial.grid, spatial.kernel, c);
  Rng rng(22);
  s.initialize(rng);
  for (int t = 0; t < c.burn_in; ++t) s.iterate(rng, t);
  const int events = s.adaptation_events();
  const double th = s.theta_proposal_sd(), la = s.lambda_proposal_sd();
  EXPECT_GT(events, 0);
  for (int t = c.burn_in; t < c.iterations; ++t) s.iterate(rng, -1);
  EXPECT_EQ(s.adaptation_events(), events);
  EXPECT_EQ(s.theta_proposal_sd(), th);
  EXPECT_EQ(s.lambda_proposal_sd(), la);

  const ChainSummary out = run_chain(d, spatial.grid, spatial.kernel, c);
  EXPECT_LT(out.last_adaptation_iteration, c.burn_in);
}

TEST(RunChain, NullDataIsSparse) {
  const auto sys = small(10, 5);
  Rng rng(23);
  const Dataset d = normalize_dataset(validation::random_dataset(sys.domain, 60, 0, rng), ResponseMode::kGaussian);
  McmcConfig c;
  c.iterations = 1500;
  c.burn_in = 500;
  c.lambda_lower = c.lambda_upper = 1.0;
  c.seed = 24;
  const ChainSummary out = run_chain(d, sys.spatial.grid, sys.spatial.kernel, c);
  EXPECT_LT(out.nonzero_freq.mean(), 2.0 * prior_inclusion_probability(ThresholdLevel(1.0)));
}

TEST(RunChain, ProbitModeKeepsLatentSigns) {
  const auto sys = small(8, 4);
  Rng rng(25);
  Dataset d = validation::random_dataset(sys.domain, 40, 1, rng);
  for (Eigen::Index i = 0; i < d.n(); ++i) d.y(i) = d.X(i, 10) + 0.3 * rng.normal() > 0 ? 1.0 : 0.0;
  McmcConfig c;
  c.mode = ResponseMode::kProbit;
  c.lambda_lower = 1.43;
  c.lambda_upper = 1.96;
  Sampler<> s(d, sys.spatial.grid, sys.spatial.kernel, c);
  s.initialize(rng);
  for (int t = 0; t < 200; ++t) {
    s.iterate(rng, t);
    for (Eigen::Index i = 0; i < d.n(); ++i) ASSERT_EQ(s.state().z(i) > 0.0, d.y(i) == 1.0);
  }
  c.iterations = 200;
  c.burn_in = 50;
  const ChainSummary out = run_chain(d, sys.spatial.grid, sys.spatial.kernel, c);
  for (double v : out.traces.sigma2) EXPECT_EQ(v, 1.0);
}

TEST(RunChain, CacheAuditThroughFullIterations) {
  const Dataset d = signal_dataset(12, 40, 2.0, 26);
  const auto spatial = make_spatial_setup(*d.domain, {6, 6});
  McmcConfig c;
  c.lambda_lower = 0.1;
  c.lambda_upper = 1.0;
  Sampler<> s(d, spatial.grid, spatial.kernel, c);
  Rng rng(27);
  s.initialize(rng);
  for (int t = 0; t < 300; ++t) {
    s.iterate(rng, t);
    if (t % 50 == 0) {
      EXPECT_LT(cache_discrepancy(s.state(), d, s.kernels()), 1e-10);
    }
  }
}

TEST(Calibration, PilotIsTheGpFit) {
  const Dataset d = signal_dataset(12, 60, 1.0, 28);
  const auto spatial = make_spatial_setup(*d.domain, {6, 6});
  McmcConfig c;
  c.iterations = 400;
  c.burn_in = 100;
  c.seed = 29;
  const auto cal = calibrate_lambda_prior(d, spatial.grid, spatial.kernel, c);
  const auto [lo, hi] = lambda_bounds_from_fraction(cal.fraction_excluding_zero);
  EXPECT_EQ(cal.lower, lo);
  EXPECT_EQ(cal.upper, hi);
  EXPECT_LE(cal.lower, cal.upper);
  McmcConfig gp = c;
  gp.lambda_lower = gp.lambda_upper = 0.0;
  const ChainSummary direct = run_chain(d, spatial.grid, spatial.kernel, gp);
  EXPECT_EQ(direct.beta_mean, cal.pilot.beta_mean);
}

TEST(Geweke, SuccessiveConditionalMatchesPrior) {
  const auto r = validation::geweke_test(10000, 30);
  EXPECT_LT(r.max_abs_z, 3.0);
}
