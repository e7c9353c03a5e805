#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "stgp/distributions.hpp"
#include "stgp/errors.hpp"
#include "stgp/model.hpp"
#include "stgp/spatial.hpp"
#include "stgp/threshold.hpp"

namespace stgp {

/// Prior hyperparameters. Defaults are the normalized-data priors:
/// alpha ~ N(0, 10^2 I), sigma^2 ~ InvGamma(0.1, 0.1), sigma_a ~ HalfNormal(0, 1),
/// theta ~ Beta(10, 1).
struct Hyperpriors {
  double alpha_variance = 100.0;
  double sigma2_shape = 0.1;
  double sigma2_scale = 0.1;
  double sigma_a_scale = 1.0;
  double theta_a = 10.0;
  double theta_b = 1.0;
};

enum class SweepOrder { kSequential, kRandomPermutation };

struct McmcConfig {
  int iterations = 5000;
  int burn_in = 1000;
  int thin = 1;
  /// Stride between stored beta draws (credible intervals).
  int sample_thin = 10;
  bool store_samples = true;
  std::uint64_t seed = 1;
  ResponseMode mode = ResponseMode::kGaussian;
  SweepOrder sweep = SweepOrder::kSequential;
  Hyperpriors priors;

  double target_acceptance = 0.4;
  bool adapt = true;
  /// Robbins-Monro gain c in log(sd) += c * t^{-0.6} * (accepted - target).
  double adapt_gain = 1.0;
  double theta_proposal_sd = 0.02;
  double lambda_proposal_sd = 0.1;

  double lambda_lower = 0.0;
  double lambda_upper = 0.0;
  double theta_init = 0.9;

  bool lambda_fixed() const noexcept { return lambda_lower == lambda_upper; }

  void check() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (burn_in < 0 || burn_in >= iterations) throw ConfigError("burn_in must satisfy 0 <= burn_in < iterations");
    if (thin < 1 || sample_thin < 1) throw ConfigError("thin must be >= 1");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
      throw ConfigError("target acceptance must lie in (0, 1)");
    if (!(lambda_lower >= 0.0) || !(lambda_upper >= lambda_lower))
      throw ConfigError("lambda bounds must satisfy 0 <= lower <= upper");
    if (!(theta_proposal_sd > 0.0) || !(lambda_proposal_sd > 0.0))
      throw ConfigError("proposal standard deviations must be positive");
    if (!(theta_init > 0.0 && theta_init < 1.0)) throw ConfigError("theta_init must lie in (0, 1)");
  }
};

struct ScalarTraces {
  std::vector<Eigen::VectorXd> alpha;
  std::vector<double> theta, sigma_a, lambda, sigma2;

  std::size_t size() const noexcept { return theta.size(); }
};

struct AcceptanceRates {
  double knots = 0.0;
  double theta = 0.0;
  double lambda = 0.0;
};

struct ChainSummary {
  Eigen::VectorXd beta_mean;      // model scale
  Eigen::VectorXd nonzero_freq;
  Eigen::VectorXd ci_lower, ci_upper;
  Eigen::VectorXd alpha_mean;
  Eigen::MatrixXd beta_samples;   // p x stored draws (empty unless store_samples)
  ScalarTraces traces;
  AcceptanceRates acceptance;     // post-burn-in
  double theta_proposal_sd = 0.0; // after adaptation
  double lambda_proposal_sd = 0.0;
  int adaptation_events = 0;
  int last_adaptation_iteration = -1;
  int kept_iterations = 0;
  double wall_seconds = 0.0;
};

/// Beta(a, b) shapes with mean m and sd s (shrunk when m(1-m) <= s^2),
/// with the smaller shape at least 1e-2; the mean is always m.
inline std::pair<double, double> beta_proposal_shapes(double mean, double sd) {
  const double cap = mean * (1.0 - mean);
  double var = sd * sd;
  if (var >= cap) var = cap / (1.0 + 1e-2);
  // Concentration floor keeps the smaller shape >= 1e-2 while preserving the mean.
  const double k = std::max(cap / var - 1.0, 1e-2 / std::min(mean, 1.0 - mean));
  return {mean * k, (1.0 - mean) * k};
}

inline double log_beta_proposal(double to, double from, double sd) {
  const auto [a, b] = beta_proposal_shapes(from, sd);
  return log_beta_pdf(to, a, b);
}

/// Lambda prior bounds from the fraction u of locations whose GP credible
/// interval excludes zero: prior inclusion restricted to u +/- 0.05.
inline std::pair<double, double> lambda_bounds_from_fraction(double u, double floor = 1e-4) {
  const double lower = std::max(0.0, -normal_quantile(std::min((u + 0.05) / 2.0, 0.5)));
  const double upper = -normal_quantile(std::max((u - 0.05) / 2.0, floor));
  return {lower, std::max(lower, upper)};
}

/// Metropolis-within-Gibbs sampler for the soft-thresholded latent field.
/// The Threshold policy selects g; IdentityThreshold gives the plain GP.
template <class Threshold = SoftThreshold>
class Sampler {
public:
  Sampler(Dataset data, std::shared_ptr<const KnotGrid> grid, SparseMatrix kernel, McmcConfig cfg)
      : data_(std::move(data)), grid_(std::move(grid)), kernel_(std::move(kernel)), cfg_(cfg),
        car_(grid_, cfg.theta_init), ks_(standardize_kernels(kernel_, car_)),
        theta_sd_(cfg.theta_proposal_sd), lambda_sd_(cfg.lambda_proposal_sd) {
    cfg_.check();
    data_.check(cfg_.mode, /*allow_empty=*/true);
    if (kernel_.rows() != data_.p() || kernel_.cols() != grid_->size())
      throw ConfigError("kernel matrix shape does not match dataset and knot grid");
    if (!Threshold::thresholds && (cfg_.lambda_lower != 0.0 || cfg_.lambda_upper != 0.0))
      throw ConfigError("the identity-threshold sampler requires lambda pinned to 0");
    order_.resize(static_cast<std::size_t>(grid_->size()));
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  }

  /// alpha = 0, a ~ N(0, Q(theta_init)^{-1}), sigma_a = 1,
  /// sigma^2 = sample variance of y, lambda = midpoint of its prior range.
  void initialize(Rng &rng) {
    state_.mode = cfg_.mode;
    state_.alpha = Eigen::VectorXd::Zero(data_.q());
    state_.theta = car_.theta();
    state_.a = sample_car(car_, rng);
    state_.sigma_a = 1.0;
    state_.lambda = 0.5 * (cfg_.lambda_lower + cfg_.lambda_upper);
    state_.sigma2 = 1.0;
    if (cfg_.mode == ResponseMode::kGaussian && data_.n() > 1) {
      const double m = data_.y.mean();
      const double v = (data_.y.array() - m).square().sum() / static_cast<double>(data_.n() - 1);
      if (v > 0.0) state_.sigma2 = v;
    }
    refresh_caches<Threshold>(state_, data_, ks_);
    if (cfg_.mode == ResponseMode::kProbit) probit_augment(state_, data_, rng);
    if (!std::isfinite(loglik()))
      throw Error("non-finite log-likelihood at initialization");
  }

  /// Replace the state (theta is taken from the state, kernels rebuilt).
  void set_state(ModelState s) {
    if (s.theta != car_.theta()) rebuild_spatial(s.theta);
    state_ = std::move(s);
    state_.mode = cfg_.mode;
    refresh_caches<Threshold>(state_, data_, ks_);
  }

  /// Replace the response vector (Geweke-style simulation).
  void set_response(const Eigen::VectorXd &y) {
    if (y.size() != data_.n()) throw ContractError("response length mismatch");
    data_.y = y;
  }

  const ModelState &state() const noexcept { return state_; }
  const Dataset &data() const noexcept { return data_; }
  const KernelSystem &kernels() const noexcept { return ks_; }
  const CarStructure &car() const noexcept { return car_; }
  const McmcConfig &config() const noexcept { return cfg_; }
  double theta_proposal_sd() const noexcept { return theta_sd_; }
  double lambda_proposal_sd() const noexcept { return lambda_sd_; }

  double loglik() const {
    if (data_.n() == 0) return 0.0;
    return gaussian_loglik(state_, data_);
  }

  void update_probit(Rng &rng) {
    if (cfg_.mode == ResponseMode::kProbit) probit_augment(state_, data_, rng);
  }

  /// Conjugate normal draw of alpha given everything else.
  void update_alpha(Rng &rng) {
    const Eigen::Index q = data_.q();
    if (q == 0) return;
    const double s2 = state_.noise_variance();
    Eigen::VectorXd image_part = state_.eta - data_.W * state_.alpha;
    Eigen::MatrixXd precision = data_.W.transpose() * data_.W / s2;
    precision.diagonal().array() += 1.0 / cfg_.priors.alpha_variance;
    const Eigen::VectorXd rhs =
        data_.W.transpose() * (working_response(state_, data_) - image_part) / s2;
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    const Eigen::VectorXd mean = llt.solve(rhs);
    Eigen::VectorXd z(q);
    for (Eigen::Index k = 0; k < q; ++k) z(k) = rng.normal();
    state_.alpha = mean + llt.matrixU().solve(z);
    state_.eta = image_part + data_.W * state_.alpha;
  }

  /// Conjugate InvGamma draw; skipped in probit mode.
  void update_sigma2(Rng &rng) {
    if (cfg_.mode == ResponseMode::kProbit) return;
    const double ssr = (data_.y - state_.eta).squaredNorm();
    const double shape = cfg_.priors.sigma2_shape + 0.5 * static_cast<double>(data_.n());
    const double scale = cfg_.priors.sigma2_scale + 0.5 * ssr;
    state_.sigma2 = rng.inv_gamma(shape, scale);
  }

  /// sigma_a enters the predictor linearly through d = p^{-1/2} X g(beta~);
  /// with the half-normal prior its conditional is a positive-truncated normal.
  void update_sigma_a(Rng &rng) {
    Eigen::VectorXd g(state_.beta_tilde.size());
    for (Eigen::Index j = 0; j < g.size(); ++j) g(j) = Threshold::apply(state_.beta_tilde(j), state_.lambda);
    Eigen::VectorXd design = data_.X * g;
    design *= image_scale(data_);
    Eigen::VectorXd base = data_.q() > 0 ? Eigen::VectorXd(data_.W * state_.alpha)
                                         : Eigen::VectorXd::Zero(data_.n());
    const double s2 = state_.noise_variance();
    const double prior_prec = 1.0 / (cfg_.priors.sigma_a_scale * cfg_.priors.sigma_a_scale);
    const double var = 1.0 / (design.squaredNorm() / s2 + prior_prec);
    const double mean = var * design.dot(working_response(state_, data_) - base) / s2;
    state_.sigma_a = truncated_normal_positive(mean, std::sqrt(var), rng);
    state_.beta = state_.sigma_a * g;
    state_.eta = base + state_.sigma_a * design;
  }

  /// Random-walk Metropolis on lambda under its uniform prior.
  bool update_lambda(Rng &rng, int iteration = -1) {
    if (!Threshold::thresholds || cfg_.lambda_fixed()) return false;
    const double candidate = state_.lambda + lambda_sd_ * rng.normal();
    bool accepted = false;
    if (candidate >= cfg_.lambda_lower && candidate <= cfg_.lambda_upper) {
      ModelState next = state_;
      next.lambda = candidate;
      for (Eigen::Index j = 0; j < next.beta.size(); ++j)
        next.beta(j) = next.sigma_a * Threshold::apply(next.beta_tilde(j), candidate);
      linear_predictor(next, data_);
      const double log_ratio = loglik_of(next) - loglik();
      if (std::log(rng.uniform()) < log_ratio) {
        state_ = std::move(next);
        accepted = true;
      }
    }
    ++lambda_tries_;
    lambda_accepts_ += accepted;
    adapt(lambda_sd_, accepted, iteration, 1e-3, 5.0);
    return accepted;
  }

  /// Metropolis-Hastings on theta with a moment-matched beta proposal.
  /// The kernel standardization depends on theta, so the candidate is
  /// scored through the rebuilt K~ as well as the CAR density of a.
  bool update_theta(Rng &rng, int iteration = -1) {
    const double current = state_.theta;
    const auto [pa, pb] = beta_proposal_shapes(current, theta_sd_);
    const double candidate = rng.beta(pa, pb);
    bool accepted = false;
    if (candidate > 0.0 && candidate < 1.0) {
      if (candidate == current) {
        accepted = true;
      } else {
        CarStructure car_new(grid_, candidate);
        KernelSystem ks_new = standardize_kernels(kernel_, car_new);
        ModelState next = state_;
        next.theta = candidate;
        refresh_caches<Threshold>(next, data_, ks_new);
        const auto &pr = cfg_.priors;
        const double log_ratio = loglik_of(next) - loglik() + car_new.log_density(state_.a) -
                                 car_.log_density(state_.a) + log_beta_pdf(candidate, pr.theta_a, pr.theta_b) -
                                 log_beta_pdf(current, pr.theta_a, pr.theta_b) +
                                 log_beta_proposal(current, candidate, theta_sd_) -
                                 log_beta_proposal(candidate, current, theta_sd_);
        if (std::log(rng.uniform()) < log_ratio) {
          state_ = std::move(next);
          car_ = std::move(car_new);
          ks_ = std::move(ks_new);
          accepted = true;
        }
      }
    }
    ++theta_tries_;
    theta_accepts_ += accepted;
    adapt(theta_sd_, accepted, iteration, 1e-4, 0.5);
    return accepted;
  }

  /// One sweep over the knots. The candidate for a_l is its unit-scale CAR
  /// full conditional, so acceptance is min(1, exp(delta loglik)).
  void update_knots(Rng &rng) {
    if (cfg_.sweep == SweepOrder::kRandomPermutation)
      std::shuffle(order_.begin(), order_.end(), rng.engine());
    for (Eigen::Index l : order_) {
      const auto cond = car_conditional(state_.a, l, car_);
      const double candidate = cond.mean + std::sqrt(cond.variance) * rng.normal();
      const double delta = propose_knot<Threshold>(state_, data_, ks_, l, candidate, proposal_);
      ++knot_tries_;
      if (std::log(rng.uniform()) < delta) {
        commit_knot(state_, proposal_);
        ++knot_accepts_;
      }
    }
  }

  /// One full Gibbs cycle in the fixed block order.
  void iterate(Rng &rng, int iteration = -1) {
    update_probit(rng);
    update_alpha(rng);
    update_knots(rng);
    update_sigma_a(rng);
    update_lambda(rng, iteration);
    update_theta(rng, iteration);
    update_sigma2(rng);
  }

  void reset_acceptance_counters() {
    knot_tries_ = knot_accepts_ = theta_tries_ = theta_accepts_ = lambda_tries_ = lambda_accepts_ = 0;
  }

  AcceptanceRates acceptance() const {
    auto rate = [](long acc, long tries) { return tries > 0 ? static_cast<double>(acc) / static_cast<double>(tries) : 0.0; };
    return {rate(knot_accepts_, knot_tries_), rate(theta_accepts_, theta_tries_),
            rate(lambda_accepts_, lambda_tries_)};
  }

  int adaptation_events() const noexcept { return adaptation_events_; }
  int last_adaptation_iteration() const noexcept { return last_adaptation_iteration_; }

  /// Run burn-in plus sampling and summarize the post-burn-in draws.
  ChainSummary run(Rng &rng) {
    const auto start = std::chrono::steady_clock::now();
    initialize(rng);
    const Eigen::Index p = data_.p();
    ChainSummary out;
    Eigen::VectorXd beta_sum = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd nz_count = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd alpha_sum = Eigen::VectorXd::Zero(data_.q());
    const int kept = cfg_.iterations - cfg_.burn_in;
    std::vector<Eigen::VectorXd> stored;
    if (cfg_.store_samples) stored.reserve(static_cast<std::size_t>(kept / cfg_.sample_thin));

    for (int t = 0; t < cfg_.iterations; ++t) {
      if (t == cfg_.burn_in) reset_acceptance_counters();
      iterate(rng, t < cfg_.burn_in ? t : -1);
      if (t < cfg_.burn_in) continue;
      const int k = t - cfg_.burn_in + 1;
      beta_sum += state_.beta;
      for (Eigen::Index j = 0; j < p; ++j) nz_count(j) += state_.beta(j) != 0.0;
      alpha_sum += state_.alpha;
      if (k % cfg_.thin == 0) {
        out.traces.alpha.push_back(state_.alpha);
        out.traces.theta.push_back(state_.theta);
        out.traces.sigma_a.push_back(state_.sigma_a);
        out.traces.lambda.push_back(state_.lambda);
        out.traces.sigma2.push_back(state_.noise_variance());
      }
      if (cfg_.store_samples && k % cfg_.sample_thin == 0) stored.push_back(state_.beta);
    }

    out.kept_iterations = kept;
    out.beta_mean = beta_sum / kept;
    out.nonzero_freq = nz_count / kept;
    out.alpha_mean = alpha_sum / kept;
    out.ci_lower = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
    out.ci_upper = out.ci_lower;
    if (!stored.empty()) {
      out.beta_samples.resize(p, static_cast<Eigen::Index>(stored.size()));
      for (std::size_t s = 0; s < stored.size(); ++s) out.beta_samples.col(static_cast<Eigen::Index>(s)) = stored[s];
      std::vector<double> row(stored.size());
      for (Eigen::Index j = 0; j < p; ++j) {
        for (std::size_t s = 0; s < stored.size(); ++s) row[s] = stored[s](j);
        std::sort(row.begin(), row.end());
        out.ci_lower(j) = sorted_quantile(row, 0.025);
        out.ci_upper(j) = sorted_quantile(row, 0.975);
      }
    }
    out.acceptance = acceptance();
    out.theta_proposal_sd = theta_sd_;
    out.lambda_proposal_sd = lambda_sd_;
    out.adaptation_events = adaptation_events_;
    out.last_adaptation_iteration = last_adaptation_iteration_;
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  }

  /// Linear-interpolation quantile of sorted values (R type 7).
  static double sorted_quantile(const std::vector<double> &sorted, double prob) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  }

private:
  double loglik_of(const ModelState &s) const {
    if (data_.n() == 0) return 0.0;
    return gaussian_loglik(s, data_);
  }

  void rebuild_spatial(double theta) {
    car_ = CarStructure(grid_, theta);
    ks_ = standardize_kernels(kernel_, car_);
  }

  // Robbins-Monro step on log(sd), burn-in only (iteration >= 0).
  void adapt(double &sd, bool accepted, int iteration, double lo, double hi) {
    if (!cfg_.adapt || iteration < 0) return;
    const double gain = cfg_.adapt_gain / std::pow(static_cast<double>(iteration) + 1.0, 0.6);
    const double next = std::clamp(sd * std::exp(gain * ((accepted ? 1.0 : 0.0) - cfg_.target_acceptance)), lo, hi);
    if (next != sd) {
      sd = next;
      ++adaptation_events_;
      last_adaptation_iteration_ = iteration;
    }
  }

  Dataset data_;
  std::shared_ptr<const KnotGrid> grid_;
  SparseMatrix kernel_;
  McmcConfig cfg_;
  CarStructure car_;
  KernelSystem ks_;
  ModelState state_;
  KnotProposal proposal_;
  std::vector<Eigen::Index> order_;
  double theta_sd_;
  double lambda_sd_;
  long knot_tries_ = 0, knot_accepts_ = 0;
  long theta_tries_ = 0, theta_accepts_ = 0;
  long lambda_tries_ = 0, lambda_accepts_ = 0;
  int adaptation_events_ = 0;
  int last_adaptation_iteration_ = -1;
};

/// Run one chain from cfg.seed.
template <class Threshold = SoftThreshold>
ChainSummary run_chain(const Dataset &data, std::shared_ptr<const KnotGrid> grid, SparseMatrix kernel,
                       const McmcConfig &cfg) {
  Sampler<Threshold> sampler(data, std::move(grid), std::move(kernel), cfg);
  Rng rng(cfg.seed);
  return sampler.run(rng);
}

struct LambdaCalibration {
  double fraction_excluding_zero = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  ChainSummary pilot; // the lambda = 0 fit
};

/// Fit the lambda = 0 model, take u = share of locations whose 95% interval
/// excludes zero, and turn u into uniform prior bounds for lambda.
inline LambdaCalibration calibrate_lambda_prior(const Dataset &data, std::shared_ptr<const KnotGrid> grid,
                                                SparseMatrix kernel, McmcConfig cfg) {
  cfg.lambda_lower = cfg.lambda_upper = 0.0;
  cfg.store_samples = true;
  LambdaCalibration out;
  out.pilot = run_chain<SoftThreshold>(data, std::move(grid), std::move(kernel), cfg);
  const auto &s = out.pilot;
  const Eigen::Index p = s.beta_mean.size();
  Eigen::Index excluding = 0;
  for (Eigen::Index j = 0; j < p; ++j)
    excluding += (s.ci_lower(j) > 0.0 || s.ci_upper(j) < 0.0);
  out.fraction_excluding_zero = static_cast<double>(excluding) / static_cast<double>(p);
  std::tie(out.lower, out.upper) = lambda_bounds_from_fraction(out.fraction_excluding_zero);
  return out;
}

} // namespace stgp
