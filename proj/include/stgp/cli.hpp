#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "stgp/errors.hpp"
#include "stgp/io.hpp"
#include "stgp/mcmc.hpp"
#include "stgp/metrics.hpp"
#include "stgp/model.hpp"
#include "stgp/parallel.hpp"
#include "stgp/simdata.hpp"
#include "stgp/spatial.hpp"
#include "stgp/validation.hpp"

namespace stgp::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kSuccess = 0,
  kUsage = 2,
  kIo = 3,
  kValidationFailed = 4,
  kModel = 5,
};

/// Everything a command needs; one field per command-line flag.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 1;
  std::string out = "out";
  std::string mode = "gaussian";
  unsigned workers = 0; // 0 = all cores

  // simulate
  std::string shape = "five_peaks";
  int m = 30;
  int n = 100;
  std::string cov = "exp";
  double theta_x = 3.0;
  double upsilon = 2.0;
  double sigma = 5.0;
  double amplitude = 1.0;
  int replicates = 1;

  // fit / crossval
  std::vector<std::string> data;
  std::string locations;
  std::vector<int> knots;
  std::vector<double> axis_scale;
  double sigma_h = 0.0;
  int iters = 5000;
  int burnin = 1000;
  int thin = 1;
  int sample_thin = 10;
  std::optional<double> lambda_fixed;
  std::optional<double> lambda_lower;
  std::optional<double> lambda_upper;
  bool gp = false;
  std::string sweep = "sequential";
  double theta_sd = 0.02;
  double lambda_sd = 0.1;
  int folds = 5;

  // summarize
  std::vector<std::string> fits;
  std::string beta0;
  double cutoff = 0.5;
  std::string label = "scenario";

  // validate
  std::string inject_fault = "none";
  int geweke_cycles = 4000;

  unsigned effective_workers() const { return workers == 0 ? default_workers() : workers; }
};

struct FitOutcome {
  ChainSummary summary;
  std::optional<LambdaCalibration> calibration;
  McmcConfig config;
  Dataset data; // normalized
};

namespace detail {

inline std::string results_section(const std::vector<std::pair<std::string, std::string>> &kv,
                                   const std::string &name = "results") {
  std::ostringstream s;
  s << "\n[" << name << "]\n";
  for (const auto &[k, v] : kv) s << k << " = " << v << "\n";
  return s.str();
}

/// Unset list and optional options print as `key=""`, which would read back
/// as one empty value; leaving them out reads back as unset.
inline std::string drop_unset_entries(const std::string &ini) {
  std::istringstream in(ini);
  std::string out, line;
  while (std::getline(in, line))
    if (!line.ends_with("=\"\"")) out += line + "\n";
  return out;
}

inline std::string fmt(double v) { return io::format_double(v); }

inline McmcConfig mcmc_config(const RunConfig &rc) {
  McmcConfig c;
  c.iterations = rc.iters;
  c.burn_in = rc.burnin;
  c.thin = rc.thin;
  c.sample_thin = rc.sample_thin;
  c.seed = rc.seed;
  c.mode = parse_response_mode(rc.mode);
  if (rc.sweep == "sequential") c.sweep = SweepOrder::kSequential;
  else if (rc.sweep == "random") c.sweep = SweepOrder::kRandomPermutation;
  else throw ConfigError("unknown sweep order '" + rc.sweep + "' (expected sequential or random)");
  c.theta_proposal_sd = rc.theta_sd;
  c.lambda_proposal_sd = rc.lambda_sd;
  return c;
}

inline std::shared_ptr<const SpatialDomain> load_domain(const RunConfig &rc) {
  if (rc.locations.empty()) throw ConfigError("--locations is required");
  Eigen::MatrixXd S = io::read_locations(rc.locations).locations();
  if (!rc.axis_scale.empty()) {
    if (static_cast<Eigen::Index>(rc.axis_scale.size()) != S.cols())
      throw ConfigError("--axis-scale needs one factor per location column");
    for (Eigen::Index k = 0; k < S.cols(); ++k) S.col(k) *= rc.axis_scale[static_cast<std::size_t>(k)];
  }
  return std::make_shared<const SpatialDomain>(std::move(S));
}

/// Default knot counts: half the distinct coordinates per axis, at least 2.
inline std::vector<int> knot_dims(const RunConfig &rc, const SpatialDomain &domain) {
  if (!rc.knots.empty()) return rc.knots;
  std::vector<int> dims;
  for (Eigen::Index k = 0; k < domain.dimension(); ++k) {
    std::set<double> distinct(domain.locations().col(k).data(),
                              domain.locations().col(k).data() + domain.size());
    dims.push_back(std::max(2, static_cast<int>(distinct.size()) / 2));
  }
  return dims;
}

/// Model-scale beta to the scale of the raw data: y_scale p^{-1/2} / x_scale_j.
inline Eigen::VectorXd to_data_scale(const Eigen::VectorXd &beta, const Dataset &d) {
  Eigen::VectorXd out = beta;
  const double f = d.normalization.y_scale * image_scale(d);
  for (Eigen::Index j = 0; j < out.size(); ++j) out(j) *= f / d.normalization.x_scale(j);
  return out;
}

inline void write_summary(const fs::path &path, const ChainSummary &s, const Dataset &d) {
  const Eigen::Index p = s.beta_mean.size();
  Eigen::MatrixXd tab(p, 7);
  const Eigen::VectorXd scale = to_data_scale(Eigen::VectorXd::Ones(p), d);
  for (Eigen::Index j = 0; j < p; ++j) {
    tab(j, 0) = static_cast<double>(j + 1);
    tab(j, 1) = s.beta_mean(j) * scale(j);
    tab(j, 2) = s.nonzero_freq(j);
    tab(j, 3) = s.ci_lower(j) * scale(j);
    tab(j, 4) = s.ci_upper(j) * scale(j);
    tab(j, 5) = s.beta_mean(j);
    tab(j, 6) = scale(j);
  }
  io::write_csv(path, {"location", "beta_mean", "nonzero_freq", "ci_lower", "ci_upper", "beta_mean_model", "scale"},
                tab);
}

inline void write_traces(const fs::path &path, const ChainSummary &s, int burn_in, int thin) {
  const auto T = static_cast<Eigen::Index>(s.traces.size());
  const Eigen::Index q = T > 0 ? s.traces.alpha.front().size() : 0;
  std::vector<std::string> header{"iteration", "theta", "sigma_a", "lambda", "sigma2"};
  for (Eigen::Index k = 0; k < q; ++k) header.push_back("alpha_" + std::to_string(k + 1));
  Eigen::MatrixXd tab(T, 5 + q);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto u = static_cast<std::size_t>(t);
    tab(t, 0) = static_cast<double>(burn_in + (t + 1) * thin);
    tab(t, 1) = s.traces.theta[u];
    tab(t, 2) = s.traces.sigma_a[u];
    tab(t, 3) = s.traces.lambda[u];
    tab(t, 4) = s.traces.sigma2[u];
    for (Eigen::Index k = 0; k < q; ++k) tab(t, 5 + k) = s.traces.alpha[u](k);
  }
  io::write_csv(path, header, tab);
}

inline std::vector<std::pair<std::string, std::string>> chain_results(const ChainSummary &s,
                                                                      const McmcConfig &c) {
  return {{"lambda_lower", fmt(c.lambda_lower)},
          {"lambda_upper", fmt(c.lambda_upper)},
          {"kept_iterations", std::to_string(s.kept_iterations)},
          {"acceptance_knots", fmt(s.acceptance.knots)},
          {"acceptance_theta", fmt(s.acceptance.theta)},
          {"acceptance_lambda", fmt(s.acceptance.lambda)},
          {"theta_proposal_sd", fmt(s.theta_proposal_sd)},
          {"lambda_proposal_sd", fmt(s.lambda_proposal_sd)},
          {"adaptation_events", std::to_string(s.adaptation_events)},
          {"last_adaptation_iteration", std::to_string(s.last_adaptation_iteration)}};
}

} // namespace detail

/// Fit one normalized dataset: optional lambda calibration, then the chain.
inline FitOutcome fit_dataset(const Dataset &raw, const SpatialSetup &spatial, const RunConfig &rc,
                              std::uint64_t seed) {
  FitOutcome out;
  McmcConfig cfg = detail::mcmc_config(rc);
  cfg.seed = seed;
  out.data = normalize_dataset(raw, cfg.mode, {.allow_constant_image_columns = true});
  out.data.check(cfg.mode);
  if (rc.gp) {
    cfg.lambda_lower = cfg.lambda_upper = 0.0;
  } else if (rc.lambda_fixed) {
    cfg.lambda_lower = cfg.lambda_upper = *rc.lambda_fixed;
  } else if (rc.lambda_lower || rc.lambda_upper) {
    if (!rc.lambda_lower || !rc.lambda_upper)
      throw ConfigError("--lambda-lower and --lambda-upper must be given together");
    cfg.lambda_lower = *rc.lambda_lower;
    cfg.lambda_upper = *rc.lambda_upper;
  } else if (cfg.mode == ResponseMode::kProbit) {
    cfg.lambda_lower = 1.43;
    cfg.lambda_upper = 1.96;
  } else {
    McmcConfig pilot = cfg;
    pilot.seed = derive_seed(seed, 0x9170);
    out.calibration = calibrate_lambda_prior(out.data, spatial.grid, spatial.kernel, pilot);
    cfg.lambda_lower = out.calibration->lower;
    cfg.lambda_upper = out.calibration->upper;
  }
  cfg.check();
  out.config = cfg;
  out.summary = run_chain(out.data, spatial.grid, spatial.kernel, cfg);
  return out;
}

inline std::string stem_of(const std::string &path) { return fs::path(path).stem().string(); }

inline void check_mode(const RunConfig &rc) { (void)parse_response_mode(rc.mode); }

// ---------------------------------------------------------------------------

inline int cmd_simulate(const RunConfig &rc, const std::string &manifest_head, std::ostream &log) {
  check_mode(rc);
  const BetaShape shape = parse_beta_shape(rc.shape);
  if (rc.m < 10) throw ConfigError("--m must be >= 10");
  if (rc.n < 1) throw ConfigError("--n must be >= 1");
  if (rc.cov != "exp" && rc.cov != "ss") throw ConfigError("--cov must be exp or ss");
  if (!(rc.theta_x > 0.0)) throw ConfigError("--theta-x must be positive");
  if (!(rc.upsilon >= 0.0)) throw ConfigError("--upsilon must be >= 0");
  if (!(rc.sigma >= 0.0)) throw ConfigError("--sigma must be >= 0");
  if (rc.replicates < 0) throw ConfigError("--replicates must be >= 0");

  const fs::path out = rc.out;
  fs::create_directories(out);
  std::vector<std::pair<std::string, std::string>> results{{"replicates", std::to_string(rc.replicates)}};
  if (rc.replicates > 0) {
    const TrueCoefficient beta0 = make_true_beta(shape, rc.m, rc.amplitude);
    io::write_locations(out / "locations.csv", grid_locations(rc.m));
    Eigen::MatrixXd b(beta0.beta.size(), 2);
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      b(j, 0) = beta0.beta(j);
      b(j, 1) = beta0.labels[static_cast<std::size_t>(j)];
    }
    io::write_csv(out / "beta0.csv", {"beta0", "label"}, b);
    const ExponentialFieldSampler field(rc.m, rc.cov == "exp" ? rc.theta_x : 3.0);
    const bool probit = parse_response_mode(rc.mode) == ResponseMode::kProbit;
    std::vector<std::string> names(static_cast<std::size_t>(rc.replicates));
    parallel_for(names.size(), rc.effective_workers(), [&](std::size_t r) {
      Rng rng(derive_seed(rc.seed, r + 1));
      const Eigen::MatrixXd X = rc.cov == "ss" ? sample_shared_structure_images(field, rc.upsilon, rc.n, rng, beta0)
                                               : field.sample(rc.n, rng);
      const Eigen::VectorXd y = probit ? generate_probit_response(X, beta0.beta, rng)
                                       : generate_gaussian_response(X, beta0.beta, rc.sigma, rng);
      char name[32];
      std::snprintf(name, sizeof(name), "rep_%04zu.csv", r + 1);
      names[r] = name;
      io::write_dataset(out / name, y, Eigen::MatrixXd(rc.n, 0), X);
    });
    std::string files;
    for (const auto &nm : names) files += (files.empty() ? "" : " ") + nm;
    results.emplace_back("datasets", files);
    results.emplace_back("replicate_seeds_from", "seed");
  }
  io::write_text(out / "manifest.txt", manifest_head + detail::results_section(results));
  log << "simulate: wrote " << rc.replicates << " replicate(s) to " << out.string() << "\n";
  return kSuccess;
}

inline int cmd_fit(const RunConfig &rc, const std::string &manifest_head, std::ostream &log) {
  check_mode(rc);
  if (rc.data.empty()) throw ConfigError("--data is required");
  const auto domain = detail::load_domain(rc);
  const SpatialSetup spatial = make_spatial_setup(*domain, detail::knot_dims(rc, *domain), rc.sigma_h);
  std::vector<Dataset> raws;
  for (const auto &path : rc.data) raws.push_back(io::read_dataset(path, domain));

  const fs::path out = rc.out;
  std::vector<std::string> lines(raws.size());
  parallel_for(raws.size(), rc.effective_workers(), [&](std::size_t r) {
    const auto start = std::chrono::steady_clock::now();
    const FitOutcome fit = fit_dataset(raws[r], spatial, rc, derive_seed(rc.seed, r + 1));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const fs::path dir = out / stem_of(rc.data[r]);
    fs::create_directories(dir);
    detail::write_summary(dir / "summary.csv", fit.summary, fit.data);
    detail::write_traces(dir / "trace.csv", fit.summary, fit.config.burn_in, fit.config.thin);
    auto results = detail::chain_results(fit.summary, fit.config);
    results.insert(results.begin(), {"dataset", rc.data[r]});
    results.insert(results.begin() + 1, {"chain_seed", std::to_string(fit.config.seed)});
    results.emplace_back("sigma_h", detail::fmt(spatial.sigma_h));
    results.emplace_back("knots", std::to_string(spatial.grid->size()));
    std::string text = manifest_head + detail::results_section(results);
    if (fit.calibration) {
      detail::write_summary(dir / "pilot_summary.csv", fit.calibration->pilot, fit.data);
      auto pilot = detail::chain_results(fit.calibration->pilot, fit.config);
      pilot.erase(pilot.begin(), pilot.begin() + 2);
      pilot.insert(pilot.begin(), {"fraction_excluding_zero", detail::fmt(fit.calibration->fraction_excluding_zero)});
      text += detail::results_section(pilot, "calibration");
    }
    io::write_text(dir / "manifest.txt", text);
    io::write_text(dir / "timing.txt", "wall_seconds = " + detail::fmt(seconds) + "\n");
    lines[r] = dir.string();
  });
  io::write_text(out / "manifest.txt", manifest_head);
  for (const auto &l : lines) log << "fit: wrote " << l << "\n";
  return kSuccess;
}

inline int cmd_summarize(const RunConfig &rc, const std::string &manifest_head, std::ostream &log) {
  if (rc.fits.empty()) throw ConfigError("summarize needs at least one --fits directory");
  if (rc.beta0.empty()) throw ConfigError("--beta0 is required");
  std::vector<std::string> missing;
  for (const auto &f : rc.fits)
    if (!fs::exists(fs::path(f) / "summary.csv")) missing.push_back((fs::path(f) / "summary.csv").string());
  if (!missing.empty()) {
    std::string msg = "missing replicate outputs:";
    for (const auto &m : missing) msg += "\n  " + m;
    throw IoError(msg);
  }
  const Eigen::VectorXd beta0 = io::read_csv(rc.beta0).values.col(0);

  struct Row { double mse, type1, power, gp_mse, minutes; bool has_gp, has_time; };
  std::vector<Row> rows;
  for (const auto &f : rc.fits) {
    const auto tab = io::read_csv(fs::path(f) / "summary.csv", true).values;
    if (tab.rows() != beta0.size())
      throw ConfigError(f + ": summary has " + std::to_string(tab.rows()) + " locations, beta0 has " +
                        std::to_string(beta0.size()));
    const SelectionReport rep = score_fit(tab.col(1), tab.col(2), beta0, rc.cutoff);
    Row row{rep.mse, rep.type1, rep.power, NAN, NAN, false, false};
    if (fs::exists(fs::path(f) / "pilot_summary.csv")) {
      const auto gp = io::read_csv(fs::path(f) / "pilot_summary.csv", true).values;
      row.gp_mse = coefficient_mse(gp.col(1), beta0);
      row.has_gp = true;
    }
    if (fs::exists(fs::path(f) / "timing.txt")) {
      const auto text = io::read_text(fs::path(f) / "timing.txt");
      double sec = 0.0;
      if (io::parse_double(text.substr(text.find('=') + 1), sec)) {
        row.minutes = sec / 60.0;
        row.has_time = true;
      }
    }
    rows.push_back(row);
  }
  auto mean_of = [&](auto field, auto has) {
    double s = 0.0;
    int k = 0;
    for (const auto &r : rows)
      if (has(r)) { s += field(r); ++k; }
    return k ? s / k : NAN;
  };
  auto always = [](const Row &) { return true; };
  const double mse = mean_of([](const Row &r) { return r.mse; }, always);
  const double gp = mean_of([](const Row &r) { return r.gp_mse; }, [](const Row &r) { return r.has_gp; });
  const double t1 = mean_of([](const Row &r) { return r.type1; }, always);
  const double pw = mean_of([](const Row &r) { return r.power; }, always);
  const double mins = mean_of([](const Row &r) { return r.minutes; }, [](const Row &r) { return r.has_time; });

  const fs::path out = rc.out;
  std::ostringstream report;
  report << "metric," << rc.label << "\n"
         << "mse_x1000_stgp," << detail::fmt(1000.0 * mse) << "\n"
         << "mse_x1000_gp," << detail::fmt(1000.0 * gp) << "\n"
         << "type1_pct," << detail::fmt(t1) << "\n"
         << "power_pct," << detail::fmt(pw) << "\n"
         << "replicates," << rows.size() << "\n";
  io::write_text(out / "report.csv", report.str());
  // Wall time is kept out of report.csv so that reruns stay byte-identical.
  io::write_text(out / "timing.txt", "mean_minutes = " + detail::fmt(mins) + "\n");
  std::ostringstream per;
  per << "fit,mse_x1000_stgp,mse_x1000_gp,type1_pct,power_pct\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    per << rc.fits[i] << "," << detail::fmt(1000.0 * rows[i].mse) << "," << detail::fmt(1000.0 * rows[i].gp_mse)
        << "," << detail::fmt(rows[i].type1) << "," << detail::fmt(rows[i].power) << "\n";
  io::write_text(out / "replicates.csv", per.str());
  io::write_text(out / "manifest.txt", manifest_head);
  log << "summarize: " << rows.size() << " replicate(s), MSE x1000 " << 1000.0 * mse << ", type I " << t1
      << "%, power " << pw << "%\n";
  return kSuccess;
}

inline int cmd_crossval(const RunConfig &rc, const std::string &manifest_head, std::ostream &log) {
  if (rc.data.size() != 1) throw ConfigError("crossval takes exactly one --data file");
  const auto domain = detail::load_domain(rc);
  const SpatialSetup spatial = make_spatial_setup(*domain, detail::knot_dims(rc, *domain), rc.sigma_h);
  const Dataset raw = io::read_dataset(rc.data.front(), domain);
  McmcConfig cfg = detail::mcmc_config(rc);
  if (cfg.mode != ResponseMode::kProbit) throw ConfigError("crossval requires --mode probit");
  if (rc.gp) cfg.lambda_lower = cfg.lambda_upper = 0.0;
  else if (rc.lambda_fixed) cfg.lambda_lower = cfg.lambda_upper = *rc.lambda_fixed;
  else {
    cfg.lambda_lower = rc.lambda_lower.value_or(1.43);
    cfg.lambda_upper = rc.lambda_upper.value_or(1.96);
  }
  cfg.check();
  const CrossValidationResult cv = cross_validate_auc(raw, spatial, cfg, rc.folds, rc.effective_workers());
  const fs::path out = rc.out;
  Eigen::MatrixXd roc(static_cast<Eigen::Index>(cv.roc.points.size()), 2);
  for (std::size_t i = 0; i < cv.roc.points.size(); ++i) {
    roc(static_cast<Eigen::Index>(i), 0) = cv.roc.points[i].first;
    roc(static_cast<Eigen::Index>(i), 1) = cv.roc.points[i].second;
  }
  io::write_csv(out / "roc.csv", {"fpr", "tpr"}, roc);
  Eigen::MatrixXd scores(raw.n(), 4);
  for (Eigen::Index i = 0; i < raw.n(); ++i) {
    scores(i, 0) = static_cast<double>(i + 1);
    scores(i, 1) = cv.fold[static_cast<std::size_t>(i)] + 1;
    scores(i, 2) = raw.y(i);
    scores(i, 3) = cv.scores[static_cast<std::size_t>(i)];
  }
  io::write_csv(out / "scores.csv", {"subject", "fold", "y", "score"}, scores);
  io::write_text(out / "manifest.txt",
                 manifest_head + detail::results_section({{"auc", detail::fmt(cv.roc.auc)},
                                                          {"lambda_lower", detail::fmt(cfg.lambda_lower)},
                                                          {"lambda_upper", detail::fmt(cfg.lambda_upper)}}));
  log << "crossval: AUC " << cv.roc.auc << "\n";
  return kSuccess;
}

inline int cmd_validate(const RunConfig &rc, const std::string &manifest_head, std::ostream &log) {
  KernelWeighting weighting = KernelWeighting::kStandardDeviation;
  if (rc.inject_fault == "variance_weights") weighting = KernelWeighting::kVariance;
  else if (rc.inject_fault != "none")
    throw ConfigError("unknown fault '" + rc.inject_fault + "' (expected none or variance_weights)");
  const auto results = validation::run_suite(rc.seed, weighting, static_cast<std::size_t>(rc.geweke_cycles));
  std::ostringstream csv;
  csv << "check,passed,value,threshold,detail\n";
  bool ok = true;
  for (const auto &r : results) {
    csv << r.name << "," << (r.passed ? 1 : 0) << "," << detail::fmt(r.value) << "," << detail::fmt(r.threshold)
        << ",\"" << r.detail << "\"\n";
    log << (r.passed ? "PASS " : "FAIL ") << r.name << "  value=" << r.value << "  bound=" << r.threshold << "  ("
        << r.detail << ")\n";
    ok = ok && r.passed;
  }
  const fs::path out = rc.out;
  io::write_text(out / "validate.csv", csv.str());
  io::write_text(out / "manifest.txt",
                 manifest_head + detail::results_section({{"all_passed", ok ? "true" : "false"}}));
  return ok ? kSuccess : kValidationFailed;
}

// ---------------------------------------------------------------------------

/// Parse arguments and dispatch. Returns the process exit code.
inline int run(int argc, const char *const *argv, std::ostream &log = std::cout, std::ostream &err = std::cerr) {
  RunConfig rc;
  CLI::App app{"Soft-thresholded Gaussian process scalar-on-image regression"};
  app.set_config("--config", "", "INI config file (a run manifest re-runs that command)");
  app.allow_config_extras(CLI::config_extras_mode::ignore);
  app.require_subcommand(1);

  auto common = [&](CLI::App *c) {
    c->add_option("--seed", rc.seed, "Master random seed")->capture_default_str();
    c->add_option("--out", rc.out, "Output directory")->capture_default_str();
    c->add_option("--mode", rc.mode, "gaussian or probit")->capture_default_str();
    c->add_option("--workers", rc.workers, "Worker threads (0 = all cores)")->capture_default_str();
    c->configurable();
  };
  auto model = [&](CLI::App *c) {
    c->add_option("--data", rc.data, "Dataset CSV (y, w_*, x_*); repeatable");
    c->add_option("--locations", rc.locations, "Locations CSV, one row per image column");
    c->add_option("--knots", rc.knots, "Knot counts per axis, e.g. 15,15")->delimiter(',');
    c->add_option("--axis-scale", rc.axis_scale, "Per-axis coordinate multipliers")->delimiter(',');
    c->add_option("--sigma-h", rc.sigma_h, "Kernel bandwidth (0 = minimum knot spacing)")->capture_default_str();
    c->add_option("--iters", rc.iters, "MCMC iterations")->capture_default_str();
    c->add_option("--burnin", rc.burnin, "Burn-in iterations")->capture_default_str();
    c->add_option("--thin", rc.thin, "Trace thinning")->capture_default_str();
    c->add_option("--sample-thin", rc.sample_thin, "Thinning of stored beta draws")->capture_default_str();
    c->add_option("--lambda-fixed", rc.lambda_fixed, "Pin lambda to this value");
    c->add_option("--lambda-lower", rc.lambda_lower, "Uniform prior lower bound for lambda");
    c->add_option("--lambda-upper", rc.lambda_upper, "Uniform prior upper bound for lambda");
    c->add_flag("--gp", rc.gp, "Fit the non-sparse model (lambda = 0)");
    c->add_option("--sweep", rc.sweep, "Knot sweep order: sequential or random")->capture_default_str();
    c->add_option("--theta-sd", rc.theta_sd, "Initial proposal sd for theta")->capture_default_str();
    c->add_option("--lambda-sd", rc.lambda_sd, "Initial proposal sd for lambda")->capture_default_str();
  };

  auto *sim = app.add_subcommand("simulate", "Generate synthetic replicate datasets");
  common(sim);
  sim->add_option("--shape", rc.shape, "five_peaks or triangle")->capture_default_str();
  sim->add_option("--m", rc.m, "Image side length")->capture_default_str();
  sim->add_option("--n", rc.n, "Subjects per replicate")->capture_default_str();
  sim->add_option("--cov", rc.cov, "exp or ss")->capture_default_str();
  sim->add_option("--theta-x", rc.theta_x, "Exponential covariance range")->capture_default_str();
  sim->add_option("--upsilon", rc.upsilon, "Shared-structure scale")->capture_default_str();
  sim->add_option("--sigma", rc.sigma, "Noise standard deviation")->capture_default_str();
  sim->add_option("--amplitude", rc.amplitude, "Peak height of the true image")->capture_default_str();
  sim->add_option("--replicates", rc.replicates, "Number of datasets")->capture_default_str();

  auto *fit = app.add_subcommand("fit", "Run the sampler on one or more datasets");
  common(fit);
  model(fit);

  auto *sum = app.add_subcommand("summarize", "Score fitted replicates against the true image");
  common(sum);
  sum->add_option("--fits", rc.fits, "Fit output directories");
  sum->add_option("--beta0", rc.beta0, "True coefficient CSV");
  sum->add_option("--cutoff", rc.cutoff, "Selection cutoff on nonzero frequency")->capture_default_str();
  sum->add_option("--label", rc.label, "Scenario column name")->capture_default_str();

  auto *cv = app.add_subcommand("crossval", "Cross-validated ROC/AUC for probit data");
  common(cv);
  model(cv);
  cv->add_option("--folds", rc.folds, "Number of folds")->capture_default_str();

  auto *val = app.add_subcommand("validate", "Run the property suite");
  common(val);
  val->add_option("--inject-fault", rc.inject_fault, "none or variance_weights")->capture_default_str();
  val->add_option("--geweke-cycles", rc.geweke_cycles, "Cycles for the joint-distribution test")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kSuccess : kUsage;
  }

  const CLI::App *sub = app.get_subcommands().front();
  rc.command = sub->get_name();
  const std::string head = "# stgp run manifest; re-run with: stgp --config <this file>\n[" + rc.command + "]\n" +
                           detail::drop_unset_entries(sub->config_to_str(true, false));
  try {
    if (rc.command == "simulate") return cmd_simulate(rc, head, log);
    if (rc.command == "fit") return cmd_fit(rc, head, log);
    if (rc.command == "summarize") return cmd_summarize(rc, head, log);
    if (rc.command == "crossval") return cmd_crossval(rc, head, log);
    if (rc.command == "validate") return cmd_validate(rc, head, log);
  } catch (const ConfigError &e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError &e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error &e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const Error &e) {
    err << "error: " << e.what() << "\n";
    return kModel;
  }
  return kUsage;
}

} // namespace stgp::cli
