#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "stgp/distributions.hpp"
#include "stgp/mcmc.hpp"
#include "stgp/model.hpp"
#include "stgp/simdata.hpp"
#include "stgp/spatial.hpp"
#include "stgp/threshold.hpp"

namespace stgp::validation {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;     // the measured statistic
  double threshold = 0.0; // pass bound for value
  std::string detail;
};

/// |g(x1) - g(x2)| <= |x1 - x2| over random triples, exactly.
inline CheckResult lipschitz_check(std::size_t triples, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t violations = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < triples; ++i) {
    const double x1 = 10.0 * rng.normal();
    const double x2 = rng.uniform() < 0.1 ? x1 + 1e-9 * rng.normal() : 10.0 * rng.normal();
    const double lambda = 5.0 * rng.uniform();
    const double lhs = std::abs(soft_threshold(x1, lambda) - soft_threshold(x2, lambda));
    const double rhs = std::abs(x1 - x2);
    if (lhs > rhs) ++violations;
    worst = std::max(worst, lhs - rhs);
  }
  return {"lipschitz", violations == 0, static_cast<double>(violations), 0.0,
          std::to_string(triples) + " triples"};
}

/// Location grid {1..side}^2 with a knots x knots grid and default bandwidth.
struct SmallSystem {
  std::shared_ptr<const SpatialDomain> domain;
  SpatialSetup spatial;
};

inline SmallSystem small_system(int side, int knots) {
  SmallSystem s;
  s.domain = std::make_shared<SpatialDomain>(grid_locations(side));
  s.spatial = make_spatial_setup(*s.domain, {knots, knots});
  return s;
}

/// max_j |diag(K~ Q^{-1} K~^T)_j - 1| recomputed with a dense inverse.
inline double standardization_error(const SmallSystem &sys, double theta, KernelWeighting weighting) {
  const CarStructure car(sys.spatial.grid, theta);
  const KernelSystem ks = standardize_kernels(sys.spatial.kernel, car, weighting);
  const Eigen::MatrixXd Q = Eigen::MatrixXd(car.precision());
  const Eigen::MatrixXd Kt = Eigen::MatrixXd(ks.standardized);
  const Eigen::MatrixXd cov = Kt * Q.inverse() * Kt.transpose();
  return (cov.diagonal().array() - 1.0).abs().maxCoeff();
}

inline CheckResult standardization_check(KernelWeighting weighting = KernelWeighting::kStandardDeviation) {
  const SmallSystem sys = small_system(10, 5);
  double worst = 0.0;
  for (double theta : {0.3, 0.9, 0.99}) worst = std::max(worst, standardization_error(sys, theta, weighting));
  return {"standardization", worst < 1e-6, worst, 1e-6, "10x10 locations, 5x5 knots, theta in {0.3,0.9,0.99}"};
}

/// Dense Cholesky and smallest eigenvalue of Q(theta) on chain and grid arrays.
inline CheckResult car_positive_definite_check() {
  double smallest = INFINITY;
  bool ok = true;
  for (const std::vector<int> &dims : {std::vector<int>{6}, std::vector<int>{4, 5}}) {
    Eigen::MatrixXd S(dims.size() == 1 ? 6 : 20, static_cast<Eigen::Index>(dims.size()));
    for (Eigen::Index i = 0; i < S.rows(); ++i)
      for (Eigen::Index k = 0; k < S.cols(); ++k) S(i, k) = k == 0 ? i % (dims[0]) : i / dims[0];
    const auto grid = std::make_shared<const KnotGrid>(build_knot_grid(SpatialDomain(S), dims));
    for (double theta : {0.1, 0.5, 0.9, 0.99}) {
      const Eigen::MatrixXd Q = Eigen::MatrixXd(CarStructure(grid, theta).precision());
      Eigen::LLT<Eigen::MatrixXd> llt(Q);
      ok = ok && llt.info() == Eigen::Success;
      smallest = std::min(smallest, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q).eigenvalues().minCoeff());
    }
  }
  return {"car_positive_definite", ok && smallest > 0.0, smallest, 0.0, "smallest eigenvalue over chain and grid"};
}

/// Random model state on a small system (used by the delta-likelihood check).
inline ModelState random_state(const Dataset &d, const KernelSystem &ks, Eigen::Index L, Rng &rng) {
  ModelState s;
  s.alpha = Eigen::VectorXd(d.q());
  for (Eigen::Index k = 0; k < d.q(); ++k) s.alpha(k) = rng.normal();
  s.a = Eigen::VectorXd(L);
  for (Eigen::Index l = 0; l < L; ++l) s.a(l) = rng.normal();
  s.sigma_a = 0.5 + rng.uniform();
  s.lambda = rng.uniform();
  s.sigma2 = 0.5 + rng.uniform();
  refresh_caches(s, d, ks);
  return s;
}

inline Dataset random_dataset(std::shared_ptr<const SpatialDomain> domain, Eigen::Index n, Eigen::Index q,
                              Rng &rng) {
  Dataset d;
  d.domain = domain;
  const Eigen::Index p = domain->size();
  d.y.resize(n);
  d.W.resize(n, q);
  d.X.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.y(i) = 2.0 * rng.normal();
    for (Eigen::Index k = 0; k < q; ++k) d.W(i, k) = rng.normal();
    for (Eigen::Index j = 0; j < p; ++j) d.X(i, j) = rng.normal();
  }
  d.normalization = NormalizationRecord::identity(q, p);
  return d;
}

/// Fast knot delta versus full recomputation on random perturbations.
/// Relative error is measured against max(1, |full delta|).
inline CheckResult delta_loglik_check(std::size_t perturbations, std::uint64_t seed) {
  const SmallSystem sys = small_system(10, 5);
  Rng rng(seed);
  const Dataset d = random_dataset(sys.domain, 30, 1, rng);
  const CarStructure car(sys.spatial.grid, 0.9);
  const KernelSystem ks = standardize_kernels(sys.spatial.kernel, car);
  const Eigen::Index L = sys.spatial.grid->size();
  double worst = 0.0;
  for (std::size_t t = 0; t < perturbations; ++t) {
    const ModelState s = random_state(d, ks, L, rng);
    const auto l = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(L)));
    const double a_new = s.a(l) + rng.normal();
    const double fast = loglik_delta_knot(s, d, ks, l, a_new);
    ModelState moved = s;
    moved.a(l) = a_new;
    refresh_caches(moved, d, ks);
    const double full = gaussian_loglik(moved, d) - gaussian_loglik(s, d);
    worst = std::max(worst, std::abs(fast - full) / std::max(1.0, std::abs(full)));
  }
  return {"delta_loglik", worst < 1e-8, worst, 1e-8, std::to_string(perturbations) + " perturbations"};
}

/// Prior draws of the standardized field: mean nonzero fraction after
/// thresholding at lambda versus 2 Phi(-lambda), in standard errors.
inline CheckResult prior_sparsity_check(std::size_t draws, double lambda, std::uint64_t seed) {
  const SmallSystem sys = small_system(10, 5);
  Rng rng(seed);
  const Hyperpriors pr;
  std::vector<double> fractions;
  fractions.reserve(draws);
  for (std::size_t t = 0; t < draws; ++t) {
    const double theta = std::min(rng.beta(pr.theta_a, pr.theta_b), 1.0 - 1e-9);
    const CarStructure car(sys.spatial.grid, theta);
    const KernelSystem ks = standardize_kernels(sys.spatial.kernel, car);
    const Eigen::VectorXd field = ks.standardized * sample_car(car, rng);
    fractions.push_back(static_cast<double>((field.array().abs() > lambda).count()) /
                        static_cast<double>(field.size()));
  }
  double mean = 0.0;
  for (double f : fractions) mean += f;
  mean /= static_cast<double>(draws);
  double var = 0.0;
  for (double f : fractions) var += (f - mean) * (f - mean);
  var /= static_cast<double>(draws - 1);
  const double se = std::sqrt(var / static_cast<double>(draws));
  const double target = prior_inclusion_probability(ThresholdLevel(lambda));
  const double z = std::abs(mean - target) / se;
  return {"prior_sparsity", z < 3.0, z, 3.0,
          "empirical " + std::to_string(mean) + " vs " + std::to_string(target)};
}

// ---------------------------------------------------------------------------
// Geweke-style joint-distribution test

struct GewekeSetup {
  Dataset data;
  SpatialSetup spatial;
  McmcConfig config;
};

/// n = 20, p = 16 (4x4 lattice), L = 4 (2x2 knots), one covariate. Priors
/// have finite fourth moments so the moment comparison is well posed.
inline GewekeSetup geweke_setup(std::uint64_t seed) {
  GewekeSetup g;
  auto domain = std::make_shared<const SpatialDomain>(grid_locations(4));
  g.spatial = make_spatial_setup(*domain, {2, 2});
  Rng rng(derive_seed(seed, 17));
  g.data = random_dataset(domain, 20, 1, rng);
  McmcConfig &c = g.config;
  c.adapt = false;
  c.theta_proposal_sd = 0.1;
  c.lambda_proposal_sd = 0.3;
  c.lambda_lower = 0.2;
  c.lambda_upper = 1.0;
  c.priors.alpha_variance = 1.0;
  c.priors.sigma2_shape = 6.0;
  c.priors.sigma2_scale = 5.0;
  c.priors.theta_a = 8.0;
  c.priors.theta_b = 4.0;
  c.iterations = 2;
  c.burn_in = 0;
  c.store_samples = false;
  return g;
}

/// Exact draw of every parameter from its prior.
inline ModelState draw_prior_state(const GewekeSetup &g, Rng &rng) {
  const auto &pr = g.config.priors;
  ModelState s;
  s.mode = g.config.mode;
  s.alpha = Eigen::VectorXd(g.data.q());
  for (Eigen::Index k = 0; k < g.data.q(); ++k) s.alpha(k) = std::sqrt(pr.alpha_variance) * rng.normal();
  do {
    s.theta = rng.beta(pr.theta_a, pr.theta_b);
  } while (!(s.theta > 0.0 && s.theta < 1.0));
  s.a = sample_car(CarStructure(g.spatial.grid, s.theta), rng);
  s.sigma_a = pr.sigma_a_scale * std::abs(rng.normal());
  s.lambda = g.config.lambda_lower + (g.config.lambda_upper - g.config.lambda_lower) * rng.uniform();
  s.sigma2 = rng.inv_gamma(pr.sigma2_shape, pr.sigma2_scale);
  return s;
}

/// y ~ N(eta, sigma^2) from a state with valid caches.
inline Eigen::VectorXd draw_response(const ModelState &s, Rng &rng) {
  Eigen::VectorXd y = s.eta;
  const double sd = std::sqrt(s.sigma2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += sd * rng.normal();
  return y;
}

inline std::array<double, 4> geweke_statistics(const ModelState &s) {
  return {s.sigma_a, s.theta, s.a.mean(), s.sigma2};
}

inline const std::array<std::string, 4> kGewekeNames{"sigma_a", "theta", "mean_a", "sigma2"};

struct GewekeComparison {
  std::string statistic;
  double marginal_mean = 0.0, successive_mean = 0.0;
  double z = 0.0;
};

struct GewekeReport {
  std::vector<GewekeComparison> comparisons; // first moments, then second moments
  double max_abs_z = 0.0;
};

/// Marginal-conditional draws from the prior against the successive-
/// conditional simulator that alternates one sampler sweep with a fresh
/// response. Standard errors of the successive side use batch means.
inline GewekeReport geweke_test(std::size_t cycles, std::uint64_t seed, std::size_t batches = 50) {
  GewekeSetup g = geweke_setup(seed);
  Rng rng(derive_seed(seed, 1));

  std::vector<std::array<double, 8>> marginal(cycles), successive(cycles);
  auto record = [](const ModelState &s) {
    const auto f = geweke_statistics(s);
    std::array<double, 8> out{};
    for (std::size_t k = 0; k < 4; ++k) {
      out[k] = f[k];
      out[k + 4] = f[k] * f[k];
    }
    return out;
  };
  for (std::size_t t = 0; t < cycles; ++t) marginal[t] = record(draw_prior_state(g, rng));

  Sampler<SoftThreshold> sampler(g.data, g.spatial.grid, g.spatial.kernel, g.config);
  sampler.set_state(draw_prior_state(g, rng));
  sampler.set_response(draw_response(sampler.state(), rng));
  for (std::size_t t = 0; t < cycles; ++t) {
    sampler.iterate(rng);
    successive[t] = record(sampler.state());
    sampler.set_response(draw_response(sampler.state(), rng));
  }

  GewekeReport report;
  const std::size_t per_batch = cycles / batches;
  for (std::size_t k = 0; k < 8; ++k) {
    double mm = 0.0, mv = 0.0, sm = 0.0;
    for (const auto &row : marginal) mm += row[k];
    mm /= static_cast<double>(cycles);
    for (const auto &row : marginal) mv += (row[k] - mm) * (row[k] - mm);
    mv /= static_cast<double>(cycles - 1);
    for (const auto &row : successive) sm += row[k];
    sm /= static_cast<double>(cycles);
    std::vector<double> bm(batches, 0.0);
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t t = b * per_batch; t < (b + 1) * per_batch; ++t) bm[b] += successive[t][k];
      bm[b] /= static_cast<double>(per_batch);
    }
    double bmean = 0.0, bvar = 0.0;
    for (double v : bm) bmean += v;
    bmean /= static_cast<double>(batches);
    for (double v : bm) bvar += (v - bmean) * (v - bmean);
    bvar /= static_cast<double>(batches - 1);
    const double se = std::sqrt(mv / static_cast<double>(cycles) + bvar / static_cast<double>(batches));
    GewekeComparison c;
    c.statistic = (k < 4 ? "E[" : "E[sq ") + kGewekeNames[k % 4] + "]";
    c.marginal_mean = mm;
    c.successive_mean = sm;
    c.z = (sm - mm) / se;
    report.max_abs_z = std::max(report.max_abs_z, std::abs(c.z));
    report.comparisons.push_back(c);
  }
  return report;
}

inline CheckResult geweke_check(std::size_t cycles, std::uint64_t seed) {
  const GewekeReport r = geweke_test(cycles, seed);
  return {"geweke", r.max_abs_z < 3.0, r.max_abs_z, 3.0, std::to_string(cycles) + " cycles, max |z| over 8 moments"};
}

/// Property suite behind `stgp validate`.
inline std::vector<CheckResult> run_suite(std::uint64_t seed, KernelWeighting weighting,
                                          std::size_t geweke_cycles = 4000) {
  std::vector<CheckResult> out;
  out.push_back(lipschitz_check(100000, derive_seed(seed, 1)));
  out.push_back(standardization_check(weighting));
  out.push_back(car_positive_definite_check());
  out.push_back(delta_loglik_check(200, derive_seed(seed, 2)));
  out.push_back(prior_sparsity_check(500, 1.0, derive_seed(seed, 3)));
  out.push_back(geweke_check(geweke_cycles, derive_seed(seed, 4)));
  return out;
}

} // namespace stgp::validation
