#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resflow/errors.hpp"

namespace resflow {

/// Static control pair (w, b) for d = 1.
struct ParamPoint {
  double w = 0.0;
  double b = 0.0;

  friend bool operator==(const ParamPoint&, const ParamPoint&) = default;
};

inline Eigen::VectorXd flatten(const ParamPoint& p) {
  return Eigen::Vector2d(p.w, p.b);
}

/// Row-major flattening of a d x d weight followed by the d bias entries.
inline Eigen::VectorXd flatten(const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(w.size() + b.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) out(k++) = w(r, c);
  }
  out.tail(b.size()) = b;
  return out;
}

/// Gaussian kernel exp(-|p - q|^2 / (2 gamma)).
inline double kernel_eval(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                          double gamma) {
  if (!(gamma > 0.0)) throw ConfigurationError("kernel length scale must be > 0");
  if (p.size() != q.size()) throw ConfigurationError("kernel: dimension mismatch");
  return std::exp(-(p - q).squaredNorm() / (2.0 * gamma));
}

inline double kernel_eval(const ParamPoint& p, const ParamPoint& q, double gamma) {
  return kernel_eval(flatten(p), flatten(q), gamma);
}

/// Weighted kernel sum sum_n alpha_n k(p, node_n) fitted to loss observations.
///
/// Coefficients are stored and summed in `Real`. With the unscaled (w, b)
/// norm the kernel matrix of nearby nodes is nearly singular and the
/// coefficients grow to ~1e8, so double accumulation loses the 1e-8
/// reproduction of node values; long double restores it.
template <class Real = long double>
class BasicKernelSurrogate {
 public:
  using real_type = Real;
  using RealVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
  using RealMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

  BasicKernelSurrogate(double gamma, std::vector<Eigen::VectorXd> nodes,
                       std::vector<Real> coeffs, double jitter = 0.0,
                       double shift = 0.0, double condition = 1.0)
      : gamma_(gamma),
        nodes_(std::move(nodes)),
        coeffs_(std::move(coeffs)),
        jitter_(jitter),
        shift_(shift),
        condition_(condition) {
    if (!(gamma_ > 0.0)) throw ConfigurationError("kernel length scale must be > 0");
    if (nodes_.empty()) throw ConfigurationError("surrogate needs N >= 1 nodes");
    if (coeffs_.size() != nodes_.size()) {
      throw ConfigurationError("surrogate needs one coefficient per node");
    }
    for (const auto& n : nodes_) {
      if (n.size() != nodes_.front().size()) {
        throw ConfigurationError("surrogate nodes must share one dimension");
      }
    }
  }

  double gamma() const noexcept { return gamma_; }
  const std::vector<Eigen::VectorXd>& nodes() const noexcept { return nodes_; }
  const std::vector<Real>& coeffs() const noexcept { return coeffs_; }
  /// Diagonal jitter added to make the factorization succeed.
  double jitter() const noexcept { return jitter_; }
  /// Diagonal regularization N*lambda + noise requested by the fit.
  double shift() const noexcept { return shift_; }
  /// Eigenvalue ratio of the kernel matrix at fit time.
  double condition() const noexcept { return condition_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Eigen::Index dim() const noexcept { return nodes_.front().size(); }

  double evaluate(const Eigen::VectorXd& p) const {
    check_dim(p);
    Real sum = 0;
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      sum += coeffs_[n] * kernel(p, nodes_[n]);
    }
    return static_cast<double>(sum);
  }

  double evaluate(const ParamPoint& p) const { return evaluate(flatten(p)); }

  /// sum_n alpha_n (-(p - node_n) / gamma) k(p, node_n).
  Eigen::VectorXd gradient(const Eigen::VectorXd& p) const {
    check_dim(p);
    RealVector g = RealVector::Zero(p.size());
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      const Real weight = coeffs_[n] * kernel(p, nodes_[n]);
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        g(i) -= weight * (static_cast<Real>(p(i)) - static_cast<Real>(nodes_[n](i))) /
                static_cast<Real>(gamma_);
      }
    }
    return g.template cast<double>();
  }

  ParamPoint gradient(const ParamPoint& p) const {
    const Eigen::VectorXd g = gradient(flatten(p));
    return {g(0), g(1)};
  }

  /// Rounding bound on evaluate(p): (N + 8) eps sum_n |alpha_n k_n|.
  double evaluation_error_bound(const Eigen::VectorXd& p) const {
    check_dim(p);
    Real magnitude = 0;
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      magnitude += std::abs(coeffs_[n] * kernel(p, nodes_[n]));
    }
    const Real eps = std::numeric_limits<Real>::epsilon();
    return static_cast<double>(static_cast<Real>(nodes_.size() + 8) * eps * magnitude) +
           std::numeric_limits<double>::epsilon() * std::abs(evaluate(p));
  }

  double evaluation_error_bound(const ParamPoint& p) const {
    return evaluation_error_bound(flatten(p));
  }

  /// |f|_H^2 = alpha^T K alpha.
  double rkhs_norm_squared() const {
    const RealMatrix K = kernel_matrix();
    RealVector a(static_cast<Eigen::Index>(coeffs_.size()));
    for (std::size_t n = 0; n < coeffs_.size(); ++n) a(static_cast<Eigen::Index>(n)) = coeffs_[n];
    return static_cast<double>(a.dot(K * a));
  }

  RealMatrix kernel_matrix() const { return kernel_matrix(nodes_, gamma_); }

  static RealMatrix kernel_matrix(const std::vector<Eigen::VectorXd>& nodes,
                                  double gamma) {
    const auto N = static_cast<Eigen::Index>(nodes.size());
    RealMatrix K(N, N);
    for (Eigen::Index i = 0; i < N; ++i) {
      K(i, i) = 1;
      for (Eigen::Index j = 0; j < i; ++j) {
        K(i, j) = K(j, i) = kernel(nodes[static_cast<std::size_t>(i)],
                                   nodes[static_cast<std::size_t>(j)], gamma);
      }
    }
    return K;
  }

  static Real kernel(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double gamma) {
    Real sq = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const Real d = static_cast<Real>(p(i)) - static_cast<Real>(q(i));
      sq += d * d;
    }
    return std::exp(-sq / (2 * static_cast<Real>(gamma)));
  }

 private:
  Real kernel(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
    return kernel(p, q, gamma_);
  }

  void check_dim(const Eigen::VectorXd& p) const {
    if (p.size() != dim()) {
      throw ConfigurationError("surrogate query has dimension " +
                               std::to_string(p.size()) + ", nodes have " +
                               std::to_string(dim()));
    }
  }

  double gamma_;
  std::vector<Eigen::VectorXd> nodes_;
  std::vector<Real> coeffs_;
  double jitter_ = 0.0;
  double shift_ = 0.0;
  double condition_ = 1.0;
};

using KernelSurrogate = BasicKernelSurrogate<long double>;

namespace detail {

inline std::vector<Eigen::VectorXd> flatten_all(const std::vector<ParamPoint>& pts) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(flatten(p));
  return out;
}

template <class Real>
BasicKernelSurrogate<Real> fit_kernel_system(std::vector<Eigen::VectorXd> nodes,
                                             const std::vector<double>& values,
                                             double gamma, double shift) {
  using S = BasicKernelSurrogate<Real>;
  if (!(gamma > 0.0)) throw ConfigurationError("kernel length scale must be > 0");
  if (nodes.empty()) throw ConfigurationError("surrogate needs N >= 1 nodes");
  if (values.size() != nodes.size()) {
    throw ConfigurationError("surrogate needs one value per node");
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].size() != nodes.front().size()) {
      throw ConfigurationError("surrogate nodes must share one dimension");
    }
    if (!nodes[i].allFinite() || !std::isfinite(values[i])) {
      throw ConfigurationError("surrogate nodes and values must be finite");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (nodes[i] == nodes[j]) {
        throw ConfigurationError("duplicate surrogate nodes " + std::to_string(j) +
                                 " and " + std::to_string(i));
      }
    }
  }
  const auto N = static_cast<Eigen::Index>(nodes.size());
  const typename S::RealMatrix K = S::kernel_matrix(nodes, gamma);
  typename S::RealVector z(N);
  for (Eigen::Index i = 0; i < N; ++i) z(i) = values[static_cast<std::size_t>(i)];

  Eigen::SelfAdjointEigenSolver<typename S::RealMatrix> eig(K, Eigen::EigenvaluesOnly);
  const Real lo = eig.eigenvalues().minCoeff();
  const Real hi = eig.eigenvalues().maxCoeff();
  const double condition = lo > 0 ? static_cast<double>(hi / lo)
                                  : std::numeric_limits<double>::infinity();

  const Real scale = K.trace() / static_cast<Real>(N);
  double jitter = 0.0;
  Real trial = 0;
  for (int attempt = 0;; ++attempt) {
    typename S::RealMatrix A = K;
    A.diagonal().array() += static_cast<Real>(shift) + trial;
    Eigen::LLT<typename S::RealMatrix> llt(A);
    if (llt.info() == Eigen::Success) {
      const typename S::RealVector alpha = llt.solve(z);
      if (alpha.allFinite()) {
        jitter = static_cast<double>(trial);
        std::vector<Real> coeffs(alpha.data(), alpha.data() + alpha.size());
        return S(gamma, std::move(nodes), std::move(coeffs), jitter, shift, condition);
      }
    }
    // Jitter ladder 1e-12 .. 1e-6 times trace(K)/N.
    if (attempt == 7) break;
    trial = scale * static_cast<Real>(std::pow(10.0, -12 + attempt));
  }
  throw IllConditionedError(
      "kernel matrix not factorizable up to jitter 1e-6*trace/N (condition "
      "estimate " + std::to_string(condition) + ")",
      condition);
}

}  // namespace detail

/// Solves sum_n alpha_n k(node_m, node_n) = value_m by Cholesky, escalating a
/// diagonal jitter only if the factorization fails.
template <class Real = long double>
BasicKernelSurrogate<Real> fit_interpolation(std::vector<Eigen::VectorXd> nodes,
                                             const std::vector<double>& values,
                                             double gamma) {
  return detail::fit_kernel_system<Real>(std::move(nodes), values, gamma, 0.0);
}

template <class Real = long double>
BasicKernelSurrogate<Real> fit_interpolation(const std::vector<ParamPoint>& nodes,
                                             const std::vector<double>& values,
                                             double gamma) {
  return fit_interpolation<Real>(detail::flatten_all(nodes), values, gamma);
}

/// Regularized fit (K + (N lambda + noise_cov) I) alpha = values.
///
/// The N lambda term is the minimizer of (1/N) sum |z_i - f(x_i)|^2 +
/// lambda |f|_H^2; a scalar noise covariance enters as a diagonal nugget. With
/// lambda = noise_cov = 0 this is fit_interpolation exactly.
template <class Real = long double>
BasicKernelSurrogate<Real> fit_ridge(std::vector<Eigen::VectorXd> nodes,
                                     const std::vector<double>& values,
                                     double gamma, double lambda,
                                     double noise_cov = 0.0) {
  if (!(lambda >= 0.0) || !(noise_cov >= 0.0)) {
    throw ConfigurationError("ridge parameters must be >= 0");
  }
  const double shift = static_cast<double>(nodes.size()) * lambda + noise_cov;
  return detail::fit_kernel_system<Real>(std::move(nodes), values, gamma, shift);
}

template <class Real = long double>
BasicKernelSurrogate<Real> fit_ridge(const std::vector<ParamPoint>& nodes,
                                     const std::vector<double>& values,
                                     double gamma, double lambda,
                                     double noise_cov = 0.0) {
  return fit_ridge<Real>(detail::flatten_all(nodes), values, gamma, lambda, noise_cov);
}

/// Point-wise |L - L_hat| / |L| with a (min, max) summary.
struct RelativeErrorField {
  std::vector<double> values;  ///< NaN where |L| < 1e-14
  double min = std::numeric_limits<double>::infinity();
  double max = 0.0;
  std::size_t skipped = 0;
};

inline constexpr double kRelativeErrorFloor = 1e-14;

template <class Real>
RelativeErrorField relative_error_field(const BasicKernelSurrogate<Real>& s,
                                        const std::vector<double>& truth,
                                        const std::vector<ParamPoint>& grid) {
  if (truth.size() != grid.size()) {
    throw ConfigurationError("relative error: one truth value per grid point");
  }
  RelativeErrorField field;
  field.values.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::abs(truth[i]) < kRelativeErrorFloor) {
      field.values[i] = std::numeric_limits<double>::quiet_NaN();
      ++field.skipped;
      continue;
    }
    const double e = std::abs(truth[i] - s.evaluate(grid[i])) / std::abs(truth[i]);
    field.values[i] = e;
    field.min = std::min(field.min, e);
    field.max = std::max(field.max, e);
  }
  return field;
}

template <class Real, class Truth>
  requires std::is_invocable_r_v<double, Truth, const ParamPoint&>
RelativeErrorField relative_error_field(const BasicKernelSurrogate<Real>& s,
                                        Truth&& truth,
                                        const std::vector<ParamPoint>& grid) {
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = truth(grid[i]);
  return relative_error_field(s, values, grid);
}

}  // namespace resflow
