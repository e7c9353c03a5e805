#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stgp/distributions.hpp"
#include "stgp/errors.hpp"
#include "stgp/spatial.hpp"
#include "stgp/threshold.hpp"

namespace stgp {

enum class ResponseMode { kGaussian, kProbit };

inline std::string to_string(ResponseMode m) {
  return m == ResponseMode::kGaussian ? "gaussian" : "probit";
}

inline ResponseMode parse_response_mode(const std::string &s) {
  if (s == "gaussian") return ResponseMode::kGaussian;
  if (s == "probit") return ResponseMode::kProbit;
  throw ConfigError("unknown mode '" + s + "' (expected gaussian or probit)");
}

/// Centering and scaling applied by normalize_dataset. An unnormalized
/// column has center 0 and scale 1.
struct NormalizationRecord {
  double y_center = 0.0;
  double y_scale = 1.0;
  Eigen::VectorXd w_center, w_scale;
  Eigen::VectorXd x_center, x_scale;

  static NormalizationRecord identity(Eigen::Index q, Eigen::Index p) {
    NormalizationRecord r;
    r.w_center = Eigen::VectorXd::Zero(q);
    r.w_scale = Eigen::VectorXd::Ones(q);
    r.x_center = Eigen::VectorXd::Zero(p);
    r.x_scale = Eigen::VectorXd::Ones(p);
    return r;
  }
};

/// Responses Y (n), scalar covariates W (n x q), images X (n x p) and the
/// locations of the p image columns.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd W;
  Eigen::MatrixXd X;
  std::shared_ptr<const SpatialDomain> domain;
  NormalizationRecord normalization;

  Eigen::Index n() const noexcept { return y.size(); }
  Eigen::Index q() const noexcept { return W.cols(); }
  Eigen::Index p() const noexcept { return X.cols(); }

  /// Throws ConfigError when shapes disagree or entries are not finite.
  /// allow_empty admits n = 0 (prior-only runs).
  void check(ResponseMode mode, bool allow_empty = false) const {
    if (!allow_empty && n() < 1) throw ConfigError("dataset has no observations");
    if (W.rows() != n() || X.rows() != n())
      throw ConfigError("dataset rows disagree between y, W and X");
    if (!domain) throw ConfigError("dataset has no spatial domain");
    if (X.cols() != domain->size())
      throw ConfigError("dataset has " + std::to_string(X.cols()) + " image columns but " +
                        std::to_string(domain->size()) + " locations");
    if (!y.allFinite() || !W.allFinite() || !X.allFinite())
      throw ConfigError("dataset contains non-finite values");
    if (mode == ResponseMode::kProbit) {
      for (Eigen::Index i = 0; i < n(); ++i)
        if (y(i) != 0.0 && y(i) != 1.0)
          throw ConfigError("probit mode requires y in {0, 1}; row " + std::to_string(i) +
                            " has " + std::to_string(y(i)));
    }
  }
};

struct NormalizeOptions {
  bool allow_constant_image_columns = false;
};

namespace detail {

inline bool is_intercept(const Eigen::VectorXd &col) {
  return col.size() > 0 && (col.array() == 1.0).all();
}

// Sample mean and standard deviation (n - 1 denominator).
inline std::pair<double, double> moments(const Eigen::VectorXd &v) {
  const double n = static_cast<double>(v.size());
  const double mean = v.mean();
  const double var = n > 1 ? (v.array() - mean).square().sum() / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var)};
}

} // namespace detail

/// Apply a stored normalization to a dataset with matching columns (used to
/// score held-out folds with the training transform).
inline Dataset apply_normalization(const Dataset &raw, const NormalizationRecord &rec) {
  Dataset out = raw;
  out.normalization = rec;
  out.y = (raw.y.array() - rec.y_center) / rec.y_scale;
  for (Eigen::Index k = 0; k < raw.q(); ++k)
    out.W.col(k) = (raw.W.col(k).array() - rec.w_center(k)) / rec.w_scale(k);
  for (Eigen::Index j = 0; j < raw.p(); ++j)
    out.X.col(j) = (raw.X.col(j).array() - rec.x_center(j)) / rec.x_scale(j);
  return out;
}

/// Center and scale Y (Gaussian mode only), every W column except an all-ones
/// intercept, and every X column, to mean 0 and unit sample variance.
inline Dataset normalize_dataset(const Dataset &raw, ResponseMode mode,
                                 NormalizeOptions opts = {}) {
  NormalizationRecord rec = NormalizationRecord::identity(raw.q(), raw.p());
  if (mode == ResponseMode::kGaussian) {
    const auto [m, s] = detail::moments(raw.y);
    if (!(s > 0.0)) throw ConfigError("response y has zero variance");
    rec.y_center = m;
    rec.y_scale = s;
  }
  for (Eigen::Index k = 0; k < raw.q(); ++k) {
    const Eigen::VectorXd col = raw.W.col(k);
    if (detail::is_intercept(col)) continue;
    const auto [m, s] = detail::moments(col);
    if (!(s > 0.0)) throw ConfigError("covariate column w_" + std::to_string(k + 1) + " has zero variance");
    rec.w_center(k) = m;
    rec.w_scale(k) = s;
  }
  for (Eigen::Index j = 0; j < raw.p(); ++j) {
    const auto [m, s] = detail::moments(raw.X.col(j));
    if (!(s > 0.0)) {
      if (!opts.allow_constant_image_columns)
        throw ConfigError("image column x_" + std::to_string(j + 1) + " has zero variance");
      rec.x_center(j) = m;
      continue;
    }
    rec.x_center(j) = m;
    rec.x_scale(j) = s;
  }
  return apply_normalization(raw, rec);
}

/// Sampler state plus the caches derived from it.
struct ModelState {
  ResponseMode mode = ResponseMode::kGaussian;
  Eigen::VectorXd alpha; // q
  Eigen::VectorXd a;     // L, unit scale
  double theta = 0.9;
  double sigma_a = 1.0;
  double lambda = 0.0;
  double sigma2 = 1.0;   // unused in probit mode
  Eigen::VectorXd z;     // probit latents

  Eigen::VectorXd beta_tilde; // K~ a
  Eigen::VectorXd beta;       // sigma_a g(beta_tilde)
  Eigen::VectorXd eta;        // W alpha + p^{-1/2} X beta

  /// Observation variance; fixed at one in probit mode.
  double noise_variance() const noexcept {
    return mode == ResponseMode::kProbit ? 1.0 : sigma2;
  }
};

/// The Gaussian-scale response: Y, or the augmented latents in probit mode.
inline const Eigen::VectorXd &working_response(const ModelState &s, const Dataset &d) {
  return s.mode == ResponseMode::kProbit ? s.z : d.y;
}

inline double image_scale(const Dataset &d) {
  return 1.0 / std::sqrt(static_cast<double>(d.p()));
}

/// beta~ = K~ a and beta = sigma_a * g(beta~).
template <class Threshold = SoftThreshold>
std::pair<Eigen::VectorXd, Eigen::VectorXd>
coefficient_field(const Eigen::VectorXd &a, const KernelSystem &ks, double lambda, double sigma_a) {
  Eigen::VectorXd bt = ks.standardized * a;
  Eigen::VectorXd b(bt.size());
  for (Eigen::Index j = 0; j < bt.size(); ++j) b(j) = sigma_a * Threshold::apply(bt(j), lambda);
  return {std::move(bt), std::move(b)};
}

inline Eigen::VectorXd linear_predictor(const Eigen::VectorXd &alpha, const Eigen::VectorXd &beta,
                                        const Dataset &d) {
  Eigen::VectorXd eta = d.X * beta;
  eta *= image_scale(d);
  if (d.q() > 0) eta.noalias() += d.W * alpha;
  return eta;
}

/// Recomputes and stores eta from the current alpha and beta.
inline const Eigen::VectorXd &linear_predictor(ModelState &s, const Dataset &d) {
  s.eta = linear_predictor(s.alpha, s.beta, d);
  return s.eta;
}

inline double gaussian_loglik(const Eigen::VectorXd &response, const Eigen::VectorXd &eta,
                              double sigma2) {
  if (!(sigma2 > 0.0)) throw ContractError("noise variance must be positive");
  const double n = static_cast<double>(response.size());
  const double ssr = (response - eta).squaredNorm();
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * ssr / sigma2;
}

inline double gaussian_loglik(const ModelState &s, const Dataset &d) {
  return gaussian_loglik(working_response(s, d), s.eta, s.noise_variance());
}

/// Rebuild beta~, beta and eta from the parameters.
template <class Threshold = SoftThreshold>
void refresh_caches(ModelState &s, const Dataset &d, const KernelSystem &ks) {
  auto [bt, b] = coefficient_field<Threshold>(s.a, ks, s.lambda, s.sigma_a);
  s.beta_tilde = std::move(bt);
  s.beta = std::move(b);
  linear_predictor(s, d);
}

/// Largest absolute disagreement between the caches and a full recompute.
template <class Threshold = SoftThreshold>
double cache_discrepancy(const ModelState &s, const Dataset &d, const KernelSystem &ks) {
  ModelState fresh = s;
  refresh_caches<Threshold>(fresh, d, ks);
  double worst = (fresh.beta_tilde - s.beta_tilde).cwiseAbs().maxCoeff();
  worst = std::max(worst, (fresh.beta - s.beta).cwiseAbs().maxCoeff());
  if (s.eta.size() > 0) worst = std::max(worst, (fresh.eta - s.eta).cwiseAbs().maxCoeff());
  return worst;
}

/// Candidate change of one knot coefficient, restricted to the knot's
/// kernel support. Filled by propose_knot, applied by commit_knot.
struct KnotProposal {
  Eigen::Index knot = 0;
  double a_new = 0.0;
  std::vector<Eigen::Index> rows;
  std::vector<double> beta_tilde_new;
  std::vector<double> beta_new;
  Eigen::VectorXd eta_delta;
  bool eta_changed = false;
  double delta_loglik = 0.0;
};

/// Log-likelihood change from setting a_l := a_new, touching only the
/// locations in the support of knot l. Cost O(|support| * n).
template <class Threshold = SoftThreshold>
double propose_knot(const ModelState &s, const Dataset &d, const KernelSystem &ks, Eigen::Index l,
                    double a_new, KnotProposal &out) {
  out.knot = l;
  out.a_new = a_new;
  out.rows.clear();
  out.beta_tilde_new.clear();
  out.beta_new.clear();
  out.eta_changed = false;
  out.delta_loglik = 0.0;
  const double step = a_new - s.a(l);
  if (step == 0.0) return 0.0;

  const double scale = image_scale(d);
  const Eigen::Index n = d.n();
  if (out.eta_delta.size() != n) out.eta_delta.resize(n);
  for (SparseMatrix::InnerIterator it(ks.standardized, l); it; ++it) {
    const Eigen::Index j = it.row();
    const double bt = s.beta_tilde(j) + it.value() * step;
    const double b = s.sigma_a * Threshold::apply(bt, s.lambda);
    out.rows.push_back(j);
    out.beta_tilde_new.push_back(bt);
    out.beta_new.push_back(b);
    const double db = b - s.beta(j);
    if (db != 0.0 && n > 0) {
      if (!out.eta_changed) {
        out.eta_delta.setZero();
        out.eta_changed = true;
      }
      out.eta_delta.noalias() += (scale * db) * d.X.col(j);
    }
  }
  if (!out.eta_changed) return 0.0;
  const Eigen::VectorXd &r = working_response(s, d);
  const double cross = (r - s.eta).dot(out.eta_delta);
  out.delta_loglik = (cross - 0.5 * out.eta_delta.squaredNorm()) / s.noise_variance();
  return out.delta_loglik;
}

template <class Threshold = SoftThreshold>
double loglik_delta_knot(const ModelState &s, const Dataset &d, const KernelSystem &ks,
                         Eigen::Index l, double a_new) {
  KnotProposal scratch;
  return propose_knot<Threshold>(s, d, ks, l, a_new, scratch);
}

inline void commit_knot(ModelState &s, const KnotProposal &prop) {
  s.a(prop.knot) = prop.a_new;
  for (std::size_t i = 0; i < prop.rows.size(); ++i) {
    s.beta_tilde(prop.rows[i]) = prop.beta_tilde_new[i];
    s.beta(prop.rows[i]) = prop.beta_new[i];
  }
  if (prop.eta_changed) s.eta += prop.eta_delta;
}

/// Redraw the probit latents: z_i ~ N(eta_i, 1) truncated to (0, inf) when
/// y_i = 1 and to (-inf, 0] when y_i = 0.
inline void probit_augment(ModelState &s, const Dataset &d, Rng &rng) {
  s.z.resize(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    if (d.y(i) == 1.0) {
      double z = truncated_normal_positive(s.eta(i), 1.0, rng);
      if (!(z > 0.0)) z = std::numeric_limits<double>::min();
      s.z(i) = z;
    } else {
      s.z(i) = std::min(0.0, truncated_normal_nonpositive(s.eta(i), 1.0, rng));
    }
  }
}

} // namespace stgp
