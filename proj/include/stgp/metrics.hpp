#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stgp/distributions.hpp"
#include "stgp/errors.hpp"
#include "stgp/mcmc.hpp"
#include "stgp/model.hpp"
#include "stgp/parallel.hpp"
#include "stgp/spatial.hpp"

namespace stgp {

/// Mean over locations of (beta_hat - beta0)^2. Report as x1000.
inline double coefficient_mse(const Eigen::VectorXd &beta_hat, const Eigen::VectorXd &beta0) {
  if (beta_hat.size() != beta0.size()) throw ContractError("coefficient vectors differ in length");
  if (beta0.size() == 0) return 0.0;
  return (beta_hat - beta0).squaredNorm() / static_cast<double>(beta0.size());
}

/// flag_j = 1 iff freq_j > cutoff (strict).
inline std::vector<int> selection_flags(const Eigen::VectorXd &nonzero_freq, double cutoff = 0.5) {
  std::vector<int> flags(static_cast<std::size_t>(nonzero_freq.size()));
  for (Eigen::Index j = 0; j < nonzero_freq.size(); ++j)
    flags[static_cast<std::size_t>(j)] = nonzero_freq(j) > cutoff ? 1 : 0;
  return flags;
}

struct SelectionReport {
  double mse = 0.0;   // unscaled; multiply by 1000 for reporting
  double type1 = 0.0; // percent of true zeros flagged
  double power = 0.0; // percent of true nonzeros flagged
  std::vector<int> flags;
};

inline SelectionReport selection_metrics(const std::vector<int> &flags, const Eigen::VectorXd &beta0) {
  if (flags.size() != static_cast<std::size_t>(beta0.size()))
    throw ContractError("flags and beta0 differ in length");
  long zeros = 0, nonzeros = 0, false_pos = 0, true_pos = 0;
  for (std::size_t j = 0; j < flags.size(); ++j) {
    if (beta0(static_cast<Eigen::Index>(j)) == 0.0) {
      ++zeros;
      false_pos += flags[j] != 0;
    } else {
      ++nonzeros;
      true_pos += flags[j] != 0;
    }
  }
  if (zeros == 0 || nonzeros == 0)
    throw ConfigError("true coefficient must have both zero and nonzero locations");
  SelectionReport r;
  r.type1 = 100.0 * static_cast<double>(false_pos) / static_cast<double>(zeros);
  r.power = 100.0 * static_cast<double>(true_pos) / static_cast<double>(nonzeros);
  r.flags = flags;
  return r;
}

inline SelectionReport score_fit(const Eigen::VectorXd &beta_hat, const Eigen::VectorXd &nonzero_freq,
                                 const Eigen::VectorXd &beta0, double cutoff = 0.5) {
  SelectionReport r = selection_metrics(selection_flags(nonzero_freq, cutoff), beta0);
  r.mse = coefficient_mse(beta_hat, beta0);
  return r;
}

struct RocCurve {
  std::vector<std::pair<double, double>> points; // (false positive rate, true positive rate)
  double auc = 0.0;
};

/// ROC over every distinct score threshold (tied scores move together)
/// and its trapezoidal area.
inline RocCurve roc_curve(const std::vector<double> &scores, const std::vector<int> &labels) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  const auto negatives = static_cast<long>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) throw ConfigError("ROC needs both classes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  RocCurve roc;
  roc.points.emplace_back(0.0, 0.0);
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == 1 ? tp : fp)++;
    const double fpr = static_cast<double>(fp) / static_cast<double>(negatives);
    const double tpr = static_cast<double>(tp) / static_cast<double>(positives);
    const auto [x0, y0] = roc.points.back();
    roc.auc += (fpr - x0) * 0.5 * (tpr + y0);
    roc.points.emplace_back(fpr, tpr);
  }
  return roc;
}

/// Class-stratified fold assignment, deterministic in the seed.
inline std::vector<int> stratified_folds(const Eigen::VectorXd &y, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  std::vector<std::size_t> ones, zeros;
  for (Eigen::Index i = 0; i < y.size(); ++i) (y(i) == 1.0 ? ones : zeros).push_back(static_cast<std::size_t>(i));
  if (ones.size() < static_cast<std::size_t>(folds) || zeros.size() < static_cast<std::size_t>(folds))
    throw ConfigError("stratification failed: each class needs at least one subject per fold (" +
                      std::to_string(ones.size()) + " positives, " + std::to_string(zeros.size()) +
                      " negatives, " + std::to_string(folds) + " folds)");
  Rng rng(derive_seed(seed, 0xf01d));
  std::vector<int> fold(static_cast<std::size_t>(y.size()));
  int next = 0;
  for (auto *group : {&ones, &zeros}) {
    std::shuffle(group->begin(), group->end(), rng.engine());
    for (std::size_t i : *group) fold[i] = next++ % folds;
  }
  return fold;
}

inline Dataset subset_rows(const Dataset &d, const std::vector<Eigen::Index> &rows) {
  Dataset out;
  out.domain = d.domain;
  out.normalization = d.normalization;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.y.resize(n);
  out.W.resize(n, d.q());
  out.X.resize(n, d.p());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.y(i) = d.y(rows[static_cast<std::size_t>(i)]);
    out.W.row(i) = d.W.row(rows[static_cast<std::size_t>(i)]);
    out.X.row(i) = d.X.row(rows[static_cast<std::size_t>(i)]);
  }
  return out;
}

struct CrossValidationResult {
  RocCurve roc;
  std::vector<double> scores; // held-out Phi(eta_hat), in subject order
  std::vector<int> fold;
};

/// K-fold probit cross-validation. Each fold normalizes its training rows,
/// fits one chain and scores held-out subjects by Phi of the posterior-mean
/// predictor; pooled scores give the ROC.
inline CrossValidationResult cross_validate_auc(const Dataset &raw, const SpatialSetup &spatial,
                                                McmcConfig cfg, int folds, unsigned workers = 1) {
  if (cfg.mode != ResponseMode::kProbit) throw ConfigError("cross-validated AUC requires probit mode");
  raw.check(ResponseMode::kProbit);
  CrossValidationResult out;
  out.fold = stratified_folds(raw.y, folds, cfg.seed);
  out.scores.assign(static_cast<std::size_t>(raw.n()), 0.0);
  parallel_for(static_cast<std::size_t>(folds), workers, [&](std::size_t f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < raw.n(); ++i)
      (out.fold[static_cast<std::size_t>(i)] == static_cast<int>(f) ? test : train).push_back(i);
    const Dataset train_set = normalize_dataset(subset_rows(raw, train), ResponseMode::kProbit,
                                                {.allow_constant_image_columns = true});
    const Dataset test_set = apply_normalization(subset_rows(raw, test), train_set.normalization);
    McmcConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, f + 1);
    fold_cfg.store_samples = false;
    const ChainSummary fit = run_chain(train_set, spatial.grid, spatial.kernel, fold_cfg);
    const Eigen::VectorXd eta = linear_predictor(fit.alpha_mean, fit.beta_mean, test_set);
    for (std::size_t k = 0; k < test.size(); ++k)
      out.scores[static_cast<std::size_t>(test[k])] = normal_cdf(eta(static_cast<Eigen::Index>(k)));
  });
  std::vector<int> labels(static_cast<std::size_t>(raw.n()));
  for (Eigen::Index i = 0; i < raw.n(); ++i) labels[static_cast<std::size_t>(i)] = raw.y(i) == 1.0;
  out.roc = roc_curve(out.scores, labels);
  return out;
}

} // namespace stgp
