#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "stgp/distributions.hpp"
#include "stgp/errors.hpp"

namespace stgp {

/// Nonnegative threshold applied to a unit-variance latent field.
class ThresholdLevel {
public:
  constexpr ThresholdLevel() = default;
  explicit ThresholdLevel(double lambda) : lambda_(lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw ContractError("threshold level must be finite and >= 0");
  }
  constexpr double value() const noexcept { return lambda_; }

private:
  double lambda_ = 0.0;
};

/// g_lambda(x): zero on |x| <= lambda (ties included, no tolerance), else
/// sgn(x)(|x| - lambda) with the difference rounded toward zero. Under that
/// rounding x - g(x) is nondecreasing in |x|, so |g(x1) - g(x2)| <= |x1 - x2|
/// holds exactly in binary64. At lambda = 0 the result is x itself.
inline double soft_threshold(double x, double lambda) noexcept {
  const double a = std::abs(x);
  if (a <= lambda) return 0.0;
  double d = a - lambda;
  if ((a - d) - lambda < 0.0) d = std::nextafter(d, 0.0); // Fast2Sum error: d exceeded the exact difference
  return x > 0.0 ? d : -d;
}

inline double soft_threshold(double x, ThresholdLevel lambda) noexcept {
  return soft_threshold(x, lambda.value());
}

inline std::vector<double> soft_threshold_field(std::span<const double> xs,
                                                ThresholdLevel lambda) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    out[i] = soft_threshold(xs[i], lambda);
  return out;
}

/// Prior probability that a unit-variance latent value survives the
/// threshold: 2 * Phi(-lambda).
inline double prior_inclusion_probability(ThresholdLevel lambda) {
  return 2.0 * normal_cdf(-lambda.value());
}

// Thresholding policies for the sampler. IdentityThreshold compiles the
// transform out entirely; the sampler with SoftThreshold at lambda = 0 must
// reproduce it bit for bit.
struct SoftThreshold {
  static constexpr bool thresholds = true;
  static double apply(double x, double lambda) noexcept {
    return soft_threshold(x, lambda);
  }
};

struct IdentityThreshold {
  static constexpr bool thresholds = false;
  static double apply(double x, double /*lambda*/) noexcept { return x; }
};

} // namespace stgp
