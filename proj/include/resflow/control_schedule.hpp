#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "resflow/errors.hpp"
#include "resflow/time_grid.hpp"

namespace resflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Time-invariant weights and bias.
struct ConstantControl {
  Matrix w;
  Vector b;
};

/// Piece k is active on [starts[k], starts[k+1]); the last piece extends to T.
struct PiecewiseConstantControl {
  std::vector<double> starts;
  std::vector<Matrix> w;
  std::vector<Vector> b;
};

/// w(t) = omega * t^alpha * I with a constant bias.
struct PowerProfile {
  double omega = 0.0;
  double alpha = 0.0;
  Vector b;
};

/// w(t) = omega * exp(alpha * t) * I with a constant bias.
struct ExpProfile {
  double omega = 0.0;
  double alpha = 0.0;
  Vector b;
};

/// Weights w(t) and bias b(t) of the continuous network over a time grid.
class ControlSchedule {
 public:
  using Mode = std::variant<ConstantControl, PiecewiseConstantControl,
                            PowerProfile, ExpProfile>;

  ControlSchedule(Mode mode, TimeGrid grid)
      : mode_(std::move(mode)), grid_(grid) {
    validate();
  }

  static ControlSchedule constant(Matrix w, Vector b, TimeGrid grid) {
    return {ConstantControl{std::move(w), std::move(b)}, grid};
  }

  /// Scalar convenience for d = 1.
  static ControlSchedule constant(double w, double b, TimeGrid grid) {
    return constant(Matrix::Constant(1, 1, w), Vector::Constant(1, b), grid);
  }

  static ControlSchedule piecewise_constant(std::vector<double> starts,
                                            std::vector<Matrix> w,
                                            std::vector<Vector> b,
                                            TimeGrid grid) {
    return {PiecewiseConstantControl{std::move(starts), std::move(w),
                                     std::move(b)},
            grid};
  }

  static ControlSchedule power_profile(double omega, double alpha, Vector b,
                                       TimeGrid grid) {
    return {PowerProfile{omega, alpha, std::move(b)}, grid};
  }

  static ControlSchedule power_profile(double omega, double alpha, double b,
                                       TimeGrid grid) {
    return power_profile(omega, alpha, Vector::Constant(1, b), grid);
  }

  static ControlSchedule exp_profile(double omega, double alpha, Vector b,
                                     TimeGrid grid) {
    return {ExpProfile{omega, alpha, std::move(b)}, grid};
  }

  static ControlSchedule exp_profile(double omega, double alpha, double b,
                                     TimeGrid grid) {
    return exp_profile(omega, alpha, Vector::Constant(1, b), grid);
  }

  const Mode& mode() const noexcept { return mode_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t dim() const noexcept { return dim_; }

  /// Copy of this schedule with the bias replaced by a constant vector.
  ControlSchedule with_bias(const Vector& b) const {
    return std::visit(
        [&](const auto& m) -> ControlSchedule {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, PiecewiseConstantControl>) {
            PiecewiseConstantControl copy = m;
            for (auto& bk : copy.b) bk = b;
            return {copy, grid_};
          } else {
            M copy = m;
            copy.b = b;
            return {copy, grid_};
          }
        },
        mode_);
  }

  Matrix weight(double t) const {
    check_time(t);
    return std::visit(
        [&](const auto& m) -> Matrix {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, ConstantControl>) {
            return m.w;
          } else if constexpr (std::is_same_v<M, PiecewiseConstantControl>) {
            return m.w[piece(m, t)];
          } else {
            return scalar_weight(t) * Matrix::Identity(dim_, dim_);
          }
        },
        mode_);
  }

  Vector bias(double t) const {
    check_time(t);
    return std::visit(
        [&](const auto& m) -> Vector {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, PiecewiseConstantControl>) {
            return m.b[piece(m, t)];
          } else {
            return m.b;
          }
        },
        mode_);
  }

  /// True when w(t) is a multiple of the identity for every t.
  bool is_scalar_profile() const noexcept {
    return std::holds_alternative<PowerProfile>(mode_) ||
           std::holds_alternative<ExpProfile>(mode_) ||
           (std::holds_alternative<ConstantControl>(mode_) && dim_ == 1);
  }

  /// Scalar weight for profiles and 1x1 constant weights.
  double scalar_weight(double t) const {
    if (const auto* p = std::get_if<PowerProfile>(&mode_)) {
      return p->omega * std::pow(t, p->alpha);
    }
    if (const auto* e = std::get_if<ExpProfile>(&mode_)) {
      return e->omega * std::exp(e->alpha * t);
    }
    if (const auto* c = std::get_if<ConstantControl>(&mode_); c && dim_ == 1) {
      return c->w(0, 0);
    }
    throw ConfigurationError("schedule has no scalar weight profile");
  }

 private:
  void check_time(double t) const {
    if (!grid_.contains(t)) {
      throw DomainError("time " + std::to_string(t) +
                        " outside the schedule horizon");
    }
  }

  std::size_t piece(const PiecewiseConstantControl& m, double t) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(t));
    auto it = std::upper_bound(m.starts.begin(), m.starts.end(), t + tol);
    if (it == m.starts.begin()) return 0;
    return static_cast<std::size_t>(it - m.starts.begin()) - 1;
  }

  void validate() {
    std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, ConstantControl>) {
            dim_ = static_cast<std::size_t>(m.b.size());
            check_pair(m.w, m.b);
          } else if constexpr (std::is_same_v<M, PiecewiseConstantControl>) {
            if (m.starts.empty() || m.starts.size() != m.w.size() ||
                m.starts.size() != m.b.size()) {
              throw ConfigurationError(
                  "piecewise-constant schedule needs one (w, b) per piece");
            }
            if (!std::is_sorted(m.starts.begin(), m.starts.end()) ||
                std::adjacent_find(m.starts.begin(), m.starts.end()) !=
                    m.starts.end()) {
              throw ConfigurationError("piece start times must increase");
            }
            dim_ = static_cast<std::size_t>(m.b.front().size());
            for (std::size_t k = 0; k < m.w.size(); ++k) check_pair(m.w[k], m.b[k]);
          } else {
            dim_ = static_cast<std::size_t>(m.b.size());
            if (!std::isfinite(m.omega) || !std::isfinite(m.alpha)) {
              throw ConfigurationError("profile parameters must be finite");
            }
            if constexpr (std::is_same_v<M, PowerProfile>) {
              if (m.alpha < 0.0) {
                throw ConfigurationError("power profile exponent must be >= 0");
              }
              if (grid_.t0() < 0.0) {
                throw ConfigurationError("power profile needs t0 >= 0");
              }
            }
            if (!m.b.allFinite()) throw ConfigurationError("bias must be finite");
          }
        },
        mode_);
    if (dim_ == 0) throw ConfigurationError("control dimension must be >= 1");
  }

  void check_pair(const Matrix& w, const Vector& b) const {
    const auto d = static_cast<Eigen::Index>(dim_);
    if (w.rows() != d || w.cols() != d || b.size() != d) {
      throw ConfigurationError("weight must be d x d and bias d-dimensional");
    }
    if (!w.allFinite() || !b.allFinite()) {
      throw ConfigurationError("weights and bias must be finite");
    }
  }

  Mode mode_;
  TimeGrid grid_;
  std::size_t dim_ = 0;
};

}  // namespace resflow
