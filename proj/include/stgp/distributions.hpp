#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "stgp/errors.hpp"

namespace stgp {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Phi^{-1}(p) for p in (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw ContractError("normal quantile requires p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double log_normal_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
}

inline double log_beta_pdf(double x, double a, double b) {
  if (!(x > 0.0 && x < 1.0)) return -std::numeric_limits<double>::infinity();
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
         (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
}

/// 64-bit mixing used to derive independent stream seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Random stream: a Mersenne twister plus the draws the sampler needs.
/// Every draw goes through this class so a fixed seed reproduces a run.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  double normal() { return std_normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = std::generate_canonical<double, 53>(engine_);
    } while (u <= 0.0);
    return u;
  }

  double gamma(double shape, double rate) {
    std::gamma_distribution<double> g(shape, 1.0 / rate);
    return g(engine_);
  }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  double inv_gamma(double shape, double scale) { return 1.0 / gamma(shape, scale); }

  std::size_t index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(engine_);
  }

  std::mt19937_64 &engine() { return engine_; }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> std_normal_;
};

/// Draw from N(0,1) restricted to (lower, inf).
///
/// Inverse CDF on the upper tail mass when lower <= 6; beyond that, the
/// exponential-proposal rejection sampler of Robert (1995).
inline double truncated_std_normal_above(double lower, Rng &rng) {
  if (lower <= 6.0) {
    const double tail = normal_cdf(-lower);
    double x = -normal_quantile(rng.uniform() * tail);
    if (!(x > lower)) x = std::nextafter(lower, std::numeric_limits<double>::infinity());
    return x;
  }
  const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  while (true) {
    const double x = lower - std::log(rng.uniform()) / rate;
    const double d = x - rate;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return x;
  }
}

/// Draw from N(mean, sd^2) restricted to (0, inf).
inline double truncated_normal_positive(double mean, double sd, Rng &rng) {
  return mean + sd * truncated_std_normal_above(-mean / sd, rng);
}

/// Draw from N(mean, sd^2) restricted to (-inf, 0].
inline double truncated_normal_nonpositive(double mean, double sd, Rng &rng) {
  return -truncated_normal_positive(-mean, sd, rng);
}

} // namespace stgp
