#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resflow/activation.hpp"
#include "resflow/control_schedule.hpp"
#include "resflow/errors.hpp"
#include "resflow/parallel.hpp"
#include "resflow/time_grid.hpp"

namespace resflow {

/// States on every point of a time grid.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;

  const Vector& initial() const { return states.front(); }
  const Vector& terminal() const { return states.back(); }
};

/// M data points in R^d with their targets.
class ParticleEnsemble {
 public:
  ParticleEnsemble(std::vector<Vector> states, std::vector<Vector> targets)
      : states_(std::move(states)), targets_(std::move(targets)) {
    if (states_.empty()) throw ConfigurationError("ensemble needs M >= 1");
    if (targets_.size() != states_.size()) {
      throw ConfigurationError("ensemble needs one target per state");
    }
    dim_ = static_cast<std::size_t>(states_.front().size());
    if (dim_ == 0) throw ConfigurationError("ensemble dimension must be >= 1");
    for (std::size_t i = 0; i < states_.size(); ++i) {
      if (static_cast<std::size_t>(states_[i].size()) != dim_ ||
          static_cast<std::size_t>(targets_[i].size()) != dim_) {
        throw ConfigurationError("particle " + std::to_string(i) +
                                 " has inconsistent dimension");
      }
      if (!states_[i].allFinite() || !targets_[i].allFinite()) {
        throw ConfigurationError("particle " + std::to_string(i) +
                                 " has non-finite entries");
      }
    }
  }

  /// Scalar data (d = 1) with a shared target.
  static ParticleEnsemble scalar(const std::vector<double>& x0, double y) {
    std::vector<Vector> s, t;
    s.reserve(x0.size());
    t.reserve(x0.size());
    for (double v : x0) {
      s.push_back(Vector::Constant(1, v));
      t.push_back(Vector::Constant(1, y));
    }
    return {std::move(s), std::move(t)};
  }

  std::size_t size() const noexcept { return states_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<Vector>& states() const noexcept { return states_; }
  const std::vector<Vector>& targets() const noexcept { return targets_; }

 private:
  std::vector<Vector> states_;
  std::vector<Vector> targets_;
  std::size_t dim_ = 0;
};

namespace detail {

inline void require_finite(const Vector& v, const std::string& context) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError(context + ": entry " + std::to_string(i) +
                         " is not finite (" + std::to_string(v[i]) + ")");
    }
  }
}

inline void check_step_shapes(const Vector& x, const Matrix& w, const Vector& b) {
  if (w.rows() != x.size() || w.cols() != x.size() || b.size() != x.size()) {
    throw ConfigurationError("resnet step: dimension mismatch (x has " +
                             std::to_string(x.size()) + " entries, w is " +
                             std::to_string(w.rows()) + "x" +
                             std::to_string(w.cols()) + ", b has " +
                             std::to_string(b.size()) + ")");
  }
}

}  // namespace detail

/// One residual layer with A = I: x + dt * sigma(w x + b).
inline Vector resnet_step(const Vector& x, const Matrix& w, const Vector& b,
                          double dt, Activation act) {
  if (!(dt > 0.0)) throw ConfigurationError("resnet step: dt must be positive");
  detail::check_step_shapes(x, w, b);
  Vector next = x + dt * activate(act, w * x + b);
  detail::require_finite(next, "resnet step");
  return next;
}

/// One residual layer A x + dt * sigma(w x + b).
inline Vector resnet_step(const Vector& x, const Matrix& w, const Vector& b,
                          double dt, Activation act, const Matrix& A) {
  if (!(dt > 0.0)) throw ConfigurationError("resnet step: dt must be positive");
  detail::check_step_shapes(x, w, b);
  if (A.rows() != x.size() || A.cols() != x.size()) {
    throw ConfigurationError("resnet step: A must be d x d");
  }
  Vector next = A * x + dt * activate(act, w * x + b);
  detail::require_finite(next, "resnet step");
  return next;
}

/// Explicit Euler trajectory of x' = sigma(w(t) x + b(t)), x(t0) = x0.
inline Trajectory integrate_ode(const Vector& x0, const ControlSchedule& ctrl,
                                Activation act) {
  if (static_cast<std::size_t>(x0.size()) != ctrl.dim()) {
    throw ConfigurationError("initial state dimension does not match schedule");
  }
  detail::require_finite(x0, "initial state");
  const TimeGrid& grid = ctrl.grid();
  Trajectory traj;
  traj.times.reserve(grid.size());
  traj.states.reserve(grid.size());
  traj.times.push_back(grid.time(0));
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const double t = grid.time(k);
    try {
      traj.states.push_back(resnet_step(traj.states.back(), ctrl.weight(t),
                                        ctrl.bias(t), grid.dt(), act));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at t = " +
                         std::to_string(grid.time(k + 1)));
    }
    traj.times.push_back(grid.time(k + 1));
  }
  return traj;
}

/// Final states of M decoupled integrations, in particle order.
///
/// The schedule is evaluated once per step and shared by all particles; each
/// particle sees exactly the operations of integrate_ode, so results match the
/// single-particle runs bit for bit.
inline std::vector<Vector> integrate_ensemble(const ParticleEnsemble& ens,
                                              const ControlSchedule& ctrl,
                                              Activation act,
                                              std::size_t threads = 1) {
  if (ens.dim() != ctrl.dim()) {
    throw ConfigurationError("ensemble dimension does not match schedule");
  }
  const TimeGrid& grid = ctrl.grid();
  std::vector<Matrix> w(grid.steps());
  std::vector<Vector> b(grid.steps());
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    w[k] = ctrl.weight(grid.time(k));
    b[k] = ctrl.bias(grid.time(k));
  }
  std::vector<Vector> finals(ens.size());
  parallel_for(ens.size(), threads, [&](std::size_t i) {
    Vector x = ens.states()[i];
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      try {
        x = resnet_step(x, w[k], b[k], grid.dt(), act);
      } catch (const NumericError& e) {
        throw NumericError("particle " + std::to_string(i) + ": " + e.what() +
                           " at t = " + std::to_string(grid.time(k + 1)));
      }
    }
    finals[i] = std::move(x);
  });
  return finals;
}

enum class LossKind { abs, square };

inline std::string_view to_string(LossKind kind) {
  return kind == LossKind::abs ? "abs" : "square";
}

inline LossKind parse_loss_kind(std::string_view name) {
  if (name == "abs") return LossKind::abs;
  if (name == "square") return LossKind::square;
  throw ConfigurationError("unknown loss '" + std::string(name) +
                           "' (expected abs or square)");
}

/// l(z): Euclidean norm or its square.
inline double pointwise_loss(LossKind kind, const Vector& z) {
  return kind == LossKind::abs ? z.norm() : z.squaredNorm();
}

/// (1/M) sum_i l(x_i(T) - y_i).
inline double loss_micro(const std::vector<Vector>& finals,
                         const std::vector<Vector>& targets, LossKind kind) {
  if (finals.size() != targets.size() || finals.empty()) {
    throw ConfigurationError("loss: finals and targets must be non-empty and "
                             "of equal count");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < finals.size(); ++i) {
    if (finals[i].size() != targets[i].size()) {
      throw ConfigurationError("loss: dimension mismatch at particle " +
                               std::to_string(i));
    }
    sum += pointwise_loss(kind, finals[i] - targets[i]);
  }
  return sum / static_cast<double>(finals.size());
}

}  // namespace resflow
