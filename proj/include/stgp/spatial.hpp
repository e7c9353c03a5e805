#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "stgp/distributions.hpp"
#include "stgp/errors.hpp"

namespace stgp {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

/// Fixed locations s_1..s_p in R^d, one row per location.
class SpatialDomain {
public:
  SpatialDomain() = default;
  explicit SpatialDomain(Eigen::MatrixXd locations) : locations_(std::move(locations)) {
    if (locations_.rows() < 1 || locations_.cols() < 1)
      throw ConfigError("spatial domain needs at least one location and one axis");
    if (!locations_.allFinite())
      throw ConfigError("spatial domain has non-finite coordinates");
    std::vector<Eigen::Index> order(locations_.rows());
    std::iota(order.begin(), order.end(), 0);
    auto row_less = [&](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index k = 0; k < locations_.cols(); ++k) {
        if (locations_(a, k) != locations_(b, k)) return locations_(a, k) < locations_(b, k);
      }
      return false;
    };
    std::sort(order.begin(), order.end(), row_less);
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (!row_less(order[i - 1], order[i]))
        throw ConfigError("duplicate location at rows " + std::to_string(order[i - 1]) +
                          " and " + std::to_string(order[i]));
    }
  }

  Eigen::Index size() const noexcept { return locations_.rows(); }
  Eigen::Index dimension() const noexcept { return locations_.cols(); }
  const Eigen::MatrixXd &locations() const noexcept { return locations_; }

private:
  Eigen::MatrixXd locations_;
};

/// Knots on an m_1 x ... x m_d array with rook adjacency.
/// Knot index runs fastest along the first axis.
struct KnotGrid {
  std::vector<int> dims;
  Eigen::MatrixXd knots; // L x d
  std::vector<std::vector<int>> neighbors;
  std::vector<int> counts;

  Eigen::Index size() const noexcept { return knots.rows(); }

  /// Smallest spacing between adjacent knots (the default bandwidth).
  double min_spacing() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < neighbors.size(); ++l)
      for (int k : neighbors[l])
        best = std::min(best, (knots.row(static_cast<Eigen::Index>(l)) - knots.row(k)).norm());
    return best;
  }
};

inline KnotGrid build_knot_grid(const SpatialDomain &domain, const std::vector<int> &dims) {
  const auto d = static_cast<std::size_t>(domain.dimension());
  if (dims.size() != d) {
    std::ostringstream msg;
    msg << "knot dims have " << dims.size() << " entries but the domain has " << d << " axes";
    throw ConfigError(msg.str());
  }
  for (int m : dims)
    if (m < 1) throw ConfigError("every knot dimension must be >= 1");

  const Eigen::RowVectorXd lo = domain.locations().colwise().minCoeff();
  const Eigen::RowVectorXd hi = domain.locations().colwise().maxCoeff();

  KnotGrid grid;
  grid.dims = dims;
  long total = 1;
  for (int m : dims) total *= m;
  const auto L = static_cast<Eigen::Index>(total);
  grid.knots.resize(L, static_cast<Eigen::Index>(d));
  grid.neighbors.assign(static_cast<std::size_t>(L), {});
  grid.counts.assign(static_cast<std::size_t>(L), 0);

  std::vector<long> stride(d, 1);
  for (std::size_t k = 1; k < d; ++k) stride[k] = stride[k - 1] * dims[k - 1];

  std::vector<int> idx(d, 0);
  for (Eigen::Index l = 0; l < L; ++l) {
    long rem = l;
    for (std::size_t k = 0; k < d; ++k) {
      idx[k] = static_cast<int>(rem % dims[k]);
      rem /= dims[k];
    }
    for (std::size_t k = 0; k < d; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      grid.knots(l, kk) = dims[k] == 1 ? 0.5 * (lo(kk) + hi(kk))
                                       : lo(kk) + (hi(kk) - lo(kk)) * idx[k] / (dims[k] - 1);
      if (idx[k] > 0) grid.neighbors[static_cast<std::size_t>(l)].push_back(static_cast<int>(l - stride[k]));
      if (idx[k] + 1 < dims[k]) grid.neighbors[static_cast<std::size_t>(l)].push_back(static_cast<int>(l + stride[k]));
    }
    auto &nb = grid.neighbors[static_cast<std::size_t>(l)];
    std::sort(nb.begin(), nb.end());
    grid.counts[static_cast<std::size_t>(l)] = static_cast<int>(nb.size());
  }
  return grid;
}

/// Tapered Gaussian kernel: exp(-h^2 / (2 sigma_h^2)) for h < 3 sigma_h, else 0.
inline double kernel_value(double h, double sigma_h) noexcept {
  if (h >= 3.0 * sigma_h) return 0.0;
  return std::exp(-h * h / (2.0 * sigma_h * sigma_h));
}

/// Sparse p x L matrix of K(||s_j - t_l||). Every location must be covered.
inline SparseMatrix kernel_matrix(const SpatialDomain &domain, const KnotGrid &grid,
                                  double sigma_h) {
  if (!(sigma_h > 0.0) || !std::isfinite(sigma_h))
    throw ConfigError("kernel bandwidth must be positive and finite");
  if (domain.dimension() != grid.knots.cols())
    throw ConfigError("domain and knot grid have different dimensions");
  const Eigen::Index p = domain.size();
  const Eigen::Index L = grid.size();
  const auto &S = domain.locations();
  std::vector<Eigen::Triplet<double>> entries;
  for (Eigen::Index j = 0; j < p; ++j) {
    bool covered = false;
    for (Eigen::Index l = 0; l < L; ++l) {
      const double v = kernel_value((S.row(j) - grid.knots.row(l)).norm(), sigma_h);
      if (v > 0.0) {
        entries.emplace_back(j, l, v);
        covered = true;
      }
    }
    if (!covered) {
      std::ostringstream msg;
      msg << "location " << j << " (";
      for (Eigen::Index k = 0; k < S.cols(); ++k) msg << (k ? ", " : "") << S(j, k);
      msg << ") is farther than 3*sigma_h = " << 3.0 * sigma_h << " from every knot";
      throw ConfigError(msg.str());
    }
  }
  SparseMatrix K(p, L);
  K.setFromTriplets(entries.begin(), entries.end());
  K.makeCompressed();
  return K;
}

using CarFactor = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

/// CAR precision Q(theta) = M - theta * A at unit scale, with a cached
/// sparse Cholesky factor P Q P^T = L L^T.
class CarStructure {
public:
  CarStructure(std::shared_ptr<const KnotGrid> grid, double theta)
      : grid_(std::move(grid)), theta_(theta) {
    if (!(theta > 0.0 && theta < 1.0))
      throw ContractError("CAR dependence must lie in (0, 1)");
    const auto L = grid_->size();
    std::vector<Eigen::Triplet<double>> entries;
    for (Eigen::Index l = 0; l < L; ++l) {
      const auto &nb = grid_->neighbors[static_cast<std::size_t>(l)];
      if (nb.empty())
        throw StructuralError("knot " + std::to_string(l) + " has no neighbours");
      entries.emplace_back(l, l, static_cast<double>(nb.size()));
      for (int k : nb) entries.emplace_back(l, k, -theta);
    }
    SparseMatrix Q(L, L);
    Q.setFromTriplets(entries.begin(), entries.end());
    Q.makeCompressed();
    auto factor = std::make_shared<CarFactor>(Q);
    if (factor->info() != Eigen::Success)
      throw StructuralError("CAR precision is not positive definite");
    log_det_ = 2.0 * factor->matrixL().nestedExpression().diagonal().array().log().sum();
    precision_ = std::move(Q);
    factor_ = std::move(factor);
  }

  double theta() const noexcept { return theta_; }
  const KnotGrid &grid() const noexcept { return *grid_; }
  const std::shared_ptr<const KnotGrid> &grid_ptr() const noexcept { return grid_; }
  const SparseMatrix &precision() const noexcept { return precision_; }
  const CarFactor &factor() const noexcept { return *factor_; }
  double log_det() const noexcept { return log_det_; }

  /// log N(a; 0, Q^{-1}).
  double log_density(const Eigen::VectorXd &a) const {
    const double quad = a.dot(precision_ * a);
    return -0.5 * static_cast<double>(a.size()) * std::log(2.0 * std::numbers::pi) +
           0.5 * log_det_ - 0.5 * quad;
  }

private:
  std::shared_ptr<const KnotGrid> grid_;
  double theta_;
  SparseMatrix precision_;
  std::shared_ptr<const CarFactor> factor_;
  double log_det_ = 0.0;
};

inline CarStructure car_precision(std::shared_ptr<const KnotGrid> grid, double theta) {
  return CarStructure(std::move(grid), theta);
}

inline CarStructure car_precision(const KnotGrid &grid, double theta) {
  return CarStructure(std::make_shared<const KnotGrid>(grid), theta);
}

struct CarConditional {
  double mean;
  double variance;
};

/// Unit-scale full conditional of a_l given the other knots.
inline CarConditional car_conditional(const Eigen::VectorXd &a, Eigen::Index l,
                                      const CarStructure &car) {
  const auto &nb = car.grid().neighbors[static_cast<std::size_t>(l)];
  double sum = 0.0;
  for (int k : nb) sum += a(k);
  const double n = static_cast<double>(nb.size());
  return {car.theta() / n * sum, 1.0 / n};
}

/// a ~ N(0, Q^{-1}) via L^T y = z, a = P^T y.
inline Eigen::VectorXd sample_car(const CarStructure &car, Rng &rng) {
  const auto L = car.grid().size();
  Eigen::VectorXd z(L);
  for (Eigen::Index i = 0; i < L; ++i) z(i) = rng.normal();
  const auto &f = car.factor();
  f.matrixU().solveInPlace(z);
  return f.permutationPinv() * z;
}

enum class KernelWeighting {
  kStandardDeviation, ///< w_j = sqrt of the prior variance (unit variance)
  kVariance,          ///< w_j = the prior variance itself; only for fault injection
};

struct KernelSystem {
  SparseMatrix raw;          // K, p x L
  Eigen::VectorXd weights;   // w, length p
  SparseMatrix standardized; // K~ = diag(1/w) K
};

/// Prior variance diag(K Q^{-1} K^T), computed in column blocks of
/// L^{-1} P K^T so the p x p product is never formed.
inline Eigen::VectorXd kernel_prior_variance(const SparseMatrix &K, const CarStructure &car) {
  const auto &f = car.factor();
  const SparseMatrix Kt = K.transpose();
  const Eigen::Index p = K.rows();
  Eigen::VectorXd var(p);
  constexpr Eigen::Index kBlock = 128;
  Eigen::MatrixXd block;
  for (Eigen::Index start = 0; start < p; start += kBlock) {
    const Eigen::Index width = std::min(kBlock, p - start);
    block = f.permutationP() * Eigen::MatrixXd(Kt.middleCols(start, width));
    f.matrixL().solveInPlace(block);
    var.segment(start, width) = block.colwise().squaredNorm().transpose();
  }
  return var;
}

inline KernelSystem standardize_kernels(SparseMatrix K, const CarStructure &car,
                                        KernelWeighting weighting = KernelWeighting::kStandardDeviation) {
  KernelSystem ks;
  const Eigen::VectorXd var = kernel_prior_variance(K, car);
  if (!(var.array() > 0.0).all())
    throw StructuralError("kernel matrix has a location with zero prior variance");
  ks.weights = weighting == KernelWeighting::kStandardDeviation ? Eigen::VectorXd(var.array().sqrt())
                                                                : var;
  ks.standardized = K;
  for (Eigen::Index l = 0; l < ks.standardized.outerSize(); ++l)
    for (SparseMatrix::InnerIterator it(ks.standardized, l); it; ++it)
      it.valueRef() /= ks.weights(it.row());
  ks.raw = std::move(K);
  return ks;
}

/// Knot grid plus raw kernel matrix for one domain: what a sampler needs
/// besides the data.
struct SpatialSetup {
  std::shared_ptr<const KnotGrid> grid;
  SparseMatrix kernel;
  double sigma_h = 0.0;
};

/// sigma_h <= 0 selects the default bandwidth, the minimum knot spacing.
inline SpatialSetup make_spatial_setup(const SpatialDomain &domain, const std::vector<int> &dims,
                                       double sigma_h = 0.0) {
  SpatialSetup out;
  auto grid = std::make_shared<KnotGrid>(build_knot_grid(domain, dims));
  out.sigma_h = sigma_h > 0.0 ? sigma_h : grid->min_spacing();
  if (!std::isfinite(out.sigma_h) || !(out.sigma_h > 0.0))
    throw ConfigError("cannot derive a bandwidth from a grid without adjacent knots");
  out.kernel = kernel_matrix(domain, *grid, out.sigma_h);
  out.grid = std::move(grid);
  return out;
}

} // namespace stgp
