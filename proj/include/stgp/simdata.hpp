#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "stgp/distributions.hpp"
#include "stgp/errors.hpp"

namespace stgp {

enum class BetaShape { kFivePeaks, kTriangle };

inline std::string to_string(BetaShape s) {
  return s == BetaShape::kFivePeaks ? "five_peaks" : "triangle";
}

inline BetaShape parse_beta_shape(const std::string &s) {
  if (s == "five_peaks") return BetaShape::kFivePeaks;
  if (s == "triangle") return BetaShape::kTriangle;
  throw ConfigError("unknown shape '" + s + "' (expected five_peaks or triangle)");
}

/// The m x m integer lattice {1..m}^2, first coordinate fastest.
inline Eigen::MatrixXd grid_locations(int m) {
  Eigen::MatrixXd S(static_cast<Eigen::Index>(m) * m, 2);
  for (int b = 0; b < m; ++b)
    for (int a = 0; a < m; ++a) {
      S(a + static_cast<Eigen::Index>(m) * b, 0) = a + 1;
      S(a + static_cast<Eigen::Index>(m) * b, 1) = b + 1;
    }
  return S;
}

struct TrueCoefficient {
  int m = 0;
  Eigen::VectorXd beta;    // length m^2
  std::vector<int> labels; // sign of beta
};

/// Parametric true images on {1..m}^2. Shapes are defined in unit-square
/// coordinates so the supports cover the same fraction at any m; the peak
/// amplitude is 1.
///
/// five_peaks: five truncated Gaussian bumps c (exp(-d^2 / 2r^2) - tau)_+.
/// triangle:   a pyramid 3 c * min barycentric coordinate, zero outside.
inline TrueCoefficient make_true_beta(BetaShape shape, int m, double amplitude = 1.0) {
  if (m < 10) throw ConfigError("true coefficient grid needs m >= 10");
  TrueCoefficient out;
  out.m = m;
  const Eigen::Index p = static_cast<Eigen::Index>(m) * m;
  out.beta = Eigen::VectorXd::Zero(p);
  out.labels.assign(static_cast<std::size_t>(p), 0);
  const Eigen::MatrixXd S = grid_locations(m);

  constexpr std::array<std::array<double, 2>, 5> kCenters{
      {{0.22, 0.22}, {0.22, 0.78}, {0.78, 0.22}, {0.78, 0.78}, {0.5, 0.5}}};
  constexpr double kRadius = 0.07;
  constexpr double kCut = 0.1;
  constexpr std::array<std::array<double, 2>, 3> kVertices{{{0.15, 0.20}, {0.85, 0.30}, {0.40, 0.85}}};

  for (Eigen::Index j = 0; j < p; ++j) {
    const double u = (S(j, 0) - 1.0) / (m - 1.0);
    const double v = (S(j, 1) - 1.0) / (m - 1.0);
    double value = 0.0;
    if (shape == BetaShape::kFivePeaks) {
      for (const auto &c : kCenters) {
        const double d2 = (u - c[0]) * (u - c[0]) + (v - c[1]) * (v - c[1]);
        value += std::max(0.0, std::exp(-d2 / (2.0 * kRadius * kRadius)) - kCut) / (1.0 - kCut);
      }
    } else {
      const auto &[a, b, c] = kVertices;
      const double det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
      const double l1 = ((b[1] - c[1]) * (u - c[0]) + (c[0] - b[0]) * (v - c[1])) / det;
      const double l2 = ((c[1] - a[1]) * (u - c[0]) + (a[0] - c[0]) * (v - c[1])) / det;
      const double l3 = 1.0 - l1 - l2;
      value = std::max(0.0, 3.0 * std::min({l1, l2, l3}));
    }
    out.beta(j) = amplitude * value;
    out.labels[static_cast<std::size_t>(j)] = (out.beta(j) > 0.0) - (out.beta(j) < 0.0);
  }
  return out;
}

/// Zero-mean Gaussian fields on {1..m}^2 with cov = exp(-d / theta_x),
/// Euclidean grid distance d. The p x p Cholesky factor is computed once.
class ExponentialFieldSampler {
public:
  ExponentialFieldSampler(int m, double theta_x) : m_(m) {
    if (m < 1) throw ConfigError("grid side must be >= 1");
    if (!(theta_x > 0.0)) throw ConfigError("theta_x must be positive");
    const Eigen::MatrixXd S = grid_locations(m);
    const Eigen::Index p = S.rows();
    Eigen::MatrixXd C(p, p);
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index l = 0; l <= j; ++l)
        C(j, l) = C(l, j) = std::exp(-(S.row(j) - S.row(l)).norm() / theta_x);
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success) {
      C.diagonal().array() += 1e-10;
      llt.compute(C);
      if (llt.info() != Eigen::Success)
        throw StructuralError("exponential covariance is not positive definite");
    }
    lower_ = llt.matrixL();
  }

  /// n x p matrix, one field per row.
  Eigen::MatrixXd sample(Eigen::Index n, Rng &rng) const {
    const Eigen::Index p = lower_.rows();
    Eigen::MatrixXd Z(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j) Z(i, j) = rng.normal();
    return Z * lower_.transpose();
  }

  int side() const noexcept { return m_; }

private:
  int m_;
  Eigen::MatrixXd lower_;
};

inline Eigen::MatrixXd sample_exp_images(int m, double theta_x, Eigen::Index n, Rng &rng) {
  return ExponentialFieldSampler(m, theta_x).sample(n, rng);
}

/// X_i = X~_i / 2 + e_i beta0 with X~ drawn from `base` and e_i ~ N(0, upsilon^2).
inline Eigen::MatrixXd sample_shared_structure_images(const ExponentialFieldSampler &base, double upsilon,
                                                      Eigen::Index n, Rng &rng, const TrueCoefficient &beta0) {
  if (!(upsilon >= 0.0)) throw ConfigError("upsilon must be >= 0");
  if (beta0.m != base.side()) throw ConfigError("true coefficient grid does not match m");
  Eigen::MatrixXd X = 0.5 * base.sample(n, rng);
  for (Eigen::Index i = 0; i < n; ++i) X.row(i) += (upsilon * rng.normal()) * beta0.beta.transpose();
  return X;
}

/// Shared-structure images with an exponential base field of range 3.
inline Eigen::MatrixXd sample_shared_structure_images(int m, double upsilon, Eigen::Index n, Rng &rng,
                                                      const TrueCoefficient &beta0) {
  return sample_shared_structure_images(ExponentialFieldSampler(m, 3.0), upsilon, n, rng, beta0);
}

/// Y = X beta0 + sigma * eps (no p^{-1/2} factor).
inline Eigen::VectorXd generate_gaussian_response(const Eigen::MatrixXd &X, const Eigen::VectorXd &beta0,
                                                  double sigma, Rng &rng) {
  if (X.cols() != beta0.size()) throw ConfigError("image columns do not match beta0 length");
  Eigen::VectorXd y = X * beta0;
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += sigma * rng.normal();
  return y;
}

/// Y = 1{X beta0 + eps > 0}.
inline Eigen::VectorXd generate_probit_response(const Eigen::MatrixXd &X, const Eigen::VectorXd &beta0,
                                                Rng &rng) {
  if (X.cols() != beta0.size()) throw ConfigError("image columns do not match beta0 length");
  Eigen::VectorXd y = X * beta0;
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = (y(i) + rng.normal() > 0.0) ? 1.0 : 0.0;
  return y;
}

} // namespace stgp
