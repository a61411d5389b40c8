#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "resflow/activation.hpp"
#include "resflow/control_schedule.hpp"
#include "resflow/dynamics.hpp"
#include "resflow/errors.hpp"
#include "resflow/parallel.hpp"
#include "resflow/quadrature.hpp"
#include "resflow/time_grid.hpp"

namespace resflow {

/// Bias values b(t_k) on every grid point.
using BiasTrajectory = std::vector<Vector>;

/// Costates of M stacked particles, lambda(t_k) in R^{M d}.
struct AdjointState {
  std::size_t particles = 0;
  std::size_t dim = 0;
  std::vector<double> times;
  std::vector<Vector> costates;
  Vector terminal;

  /// lambda_i(t_k).
  Vector particle(std::size_t k, std::size_t i) const {
    return costates[k].segment(static_cast<Eigen::Index>(i * dim),
                               static_cast<Eigen::Index>(dim));
  }
};

namespace detail {

inline std::size_t particle_count(std::size_t stacked, std::size_t dim,
                                  const char* what) {
  if (dim == 0 || stacked == 0 || stacked % dim != 0) {
    throw ConfigurationError(std::string(what) +
                             ": stacked vector length must be a positive "
                             "multiple of the state dimension");
  }
  return stacked / dim;
}

}  // namespace detail

/// Backward solve of lambda' = -A(t)^T lambda, lambda(T) = lambda_T, with
/// A(t) = I_M (x) w(t).
///
/// Each backward step lambda_k = lambda_{k+1} + dt w(t_k)^T lambda_{k+1} uses
/// the weight of the interval [t_k, t_{k+1}), which makes it the exact
/// discrete adjoint of the forward Euler scheme.
inline AdjointState adjoint_solve(const ControlSchedule& w_schedule,
                                  const Vector& lambda_T) {
  const std::size_t d = w_schedule.dim();
  const std::size_t M = detail::particle_count(
      static_cast<std::size_t>(lambda_T.size()), d, "adjoint solve");
  detail::require_finite(lambda_T, "adjoint terminal datum");
  const TimeGrid& grid = w_schedule.grid();
  AdjointState state;
  state.particles = M;
  state.dim = d;
  state.terminal = lambda_T;
  state.times.resize(grid.size());
  state.costates.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) state.times[k] = grid.time(k);
  state.costates.back() = lambda_T;
  const auto di = static_cast<Eigen::Index>(d);
  for (std::size_t k = grid.steps(); k-- > 0;) {
    const Matrix wT = w_schedule.weight(grid.time(k)).transpose();
    const Vector& later = state.costates[k + 1];
    Vector earlier(later.size());
    for (std::size_t i = 0; i < M; ++i) {
      const auto off = static_cast<Eigen::Index>(i * d);
      earlier.segment(off, di) =
          later.segment(off, di) + grid.dt() * (wT * later.segment(off, di));
    }
    try {
      detail::require_finite(earlier, "adjoint solve");
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at t = " +
                         std::to_string(grid.time(k)));
    }
    state.costates[k] = std::move(earlier);
  }
  return state;
}

/// HUM bias b(t) = sum_i lambda_i(t).
inline BiasTrajectory hum_bias(const AdjointState& adjoint) {
  BiasTrajectory bias(adjoint.costates.size());
  for (std::size_t k = 0; k < bias.size(); ++k) {
    Vector sum = Vector::Zero(static_cast<Eigen::Index>(adjoint.dim));
    for (std::size_t i = 0; i < adjoint.particles; ++i) sum += adjoint.particle(k, i);
    bias[k] = std::move(sum);
  }
  return bias;
}

/// Euler states of x' = (I_M (x) w(t)) x + (1_M (x) I_d) b(t) for stacked x.
///
/// Equals integrate_ode with the identity activation applied particle by
/// particle with the sampled bias.
inline std::vector<Vector> integrate_bias_controlled(
    const Vector& x0, const ControlSchedule& w_schedule,
    const BiasTrajectory& bias) {
  const std::size_t d = w_schedule.dim();
  const std::size_t M = detail::particle_count(
      static_cast<std::size_t>(x0.size()), d, "bias-controlled solve");
  const TimeGrid& grid = w_schedule.grid();
  if (bias.size() != grid.size()) {
    throw ConfigurationError("bias trajectory must cover every grid point");
  }
  const auto di = static_cast<Eigen::Index>(d);
  std::vector<Vector> states(grid.size());
  states[0] = x0;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const Matrix w = w_schedule.weight(grid.time(k));
    if (bias[k].size() != di) {
      throw ConfigurationError("bias vector has wrong dimension");
    }
    Vector next(x0.size());
    for (std::size_t i = 0; i < M; ++i) {
      const auto off = static_cast<Eigen::Index>(i * d);
      next.segment(off, di) = resnet_step(states[k].segment(off, di), w, bias[k],
                                          grid.dt(), Activation::identity);
    }
    states[k + 1] = std::move(next);
  }
  return states;
}

/// Both sides of x(T) . lambda_T = int b(t) . sum_i lambda_i(t) dt.
struct DualityPairing {
  double terminal = 0.0;  ///< x(T) . lambda_T with x(t0) = 0
  double control = 0.0;   ///< trapezoid quadrature of the right-hand side
  double state_norm = 0.0;     ///< |x(T)|
  double costate_norm = 0.0;   ///< |lambda_T|

  double gap() const { return std::abs(terminal - control); }
};

inline DualityPairing duality_pairing(const ControlSchedule& w_schedule,
                                      const BiasTrajectory& bias,
                                      const Vector& lambda_T) {
  const AdjointState adjoint = adjoint_solve(w_schedule, lambda_T);
  const BiasTrajectory costate_sum = hum_bias(adjoint);
  const Vector zero = Vector::Zero(lambda_T.size());
  const std::vector<Vector> states =
      integrate_bias_controlled(zero, w_schedule, bias);
  std::vector<double> integrand(bias.size());
  for (std::size_t k = 0; k < bias.size(); ++k) {
    integrand[k] = bias[k].dot(costate_sum[k]);
  }
  DualityPairing out;
  out.terminal = states.back().dot(lambda_T);
  out.control = trapezoid(integrand, w_schedule.grid().dt());
  out.state_norm = states.back().norm();
  out.costate_norm = lambda_T.norm();
  return out;
}

/// |x(T) . lambda_T - int b . sum_i lambda_i dt|.
inline double duality_gap(const ControlSchedule& w_schedule,
                          const BiasTrajectory& bias, const Vector& lambda_T) {
  return duality_pairing(w_schedule, bias, lambda_T).gap();
}

/// Result of steering stacked x0 to y with the HUM bias.
struct HumSolution {
  Vector lambda_T;
  BiasTrajectory bias;
  Matrix gramian;
  double condition = 1.0;
};

/// Largest Gramian condition number accepted by hum_solve_terminal.
inline constexpr double kMaxGramianCondition = 1e10;

/// Finds lambda_T whose HUM bias drives x(t0) = x0 to x(T) = y.
///
/// The linear map lambda_T -> x(T) (forward solve from 0 under the HUM bias)
/// is assembled column by column and solved directly. Only the identity
/// activation is covered.
inline HumSolution hum_solve_terminal(const ControlSchedule& w_schedule,
                                      const Vector& x0, const Vector& y,
                                      std::size_t threads = 1) {
  const std::size_t d = w_schedule.dim();
  detail::particle_count(static_cast<std::size_t>(x0.size()), d, "HUM solve");
  if (x0.size() != y.size()) {
    throw ConfigurationError("HUM solve: x0 and y must have equal length");
  }
  const auto n = x0.size();
  const TimeGrid& grid = w_schedule.grid();
  const BiasTrajectory no_bias(grid.size(), Vector::Zero(static_cast<Eigen::Index>(d)));
  const Vector free_end = integrate_bias_controlled(x0, w_schedule, no_bias).back();

  HumSolution sol;
  sol.gramian.resize(n, n);
  const Vector zero = Vector::Zero(n);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t j) {
    const Vector unit = Vector::Unit(n, static_cast<Eigen::Index>(j));
    const BiasTrajectory b = hum_bias(adjoint_solve(w_schedule, unit));
    sol.gramian.col(static_cast<Eigen::Index>(j)) =
        integrate_bias_controlled(zero, w_schedule, b).back();
  });

  Eigen::JacobiSVD<Matrix> svd(sol.gramian);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  sol.condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(smax > 0.0) || !(sol.condition <= kMaxGramianCondition)) {
    throw ControllabilityError(
        "terminal Gramian is singular (condition estimate " +
            std::to_string(sol.condition) +
            "); the shared bias cannot reach this target",
        sol.condition);
  }
  sol.lambda_T = sol.gramian.fullPivLu().solve(y - free_end);
  sol.bias = hum_bias(adjoint_solve(w_schedule, sol.lambda_T));
  return sol;
}

/// c1(t) = exp(int_{t0}^t w) and c2(t) = int_{t0}^t exp(-int_{t0}^s w) ds.
struct StaticCoefficients {
  double c1 = 1.0;
  double c2 = 0.0;
};

namespace detail {

/// int_{t0}^s w(r) dr for scalar profiles, in closed form.
inline double weight_integral(const ControlSchedule& ctrl, double s) {
  const double t0 = ctrl.grid().t0();
  const auto& mode = ctrl.mode();
  if (const auto* p = std::get_if<PowerProfile>(&mode)) {
    const double e = p->alpha + 1.0;
    return p->omega * (std::pow(s, e) - std::pow(t0, e)) / e;
  }
  if (const auto* x = std::get_if<ExpProfile>(&mode)) {
    if (x->alpha == 0.0) return x->omega * (s - t0);
    return x->omega * (std::exp(x->alpha * s) - std::exp(x->alpha * t0)) / x->alpha;
  }
  if (const auto* c = std::get_if<ConstantControl>(&mode); c && ctrl.dim() == 1) {
    return c->w(0, 0) * (s - t0);
  }
  throw ConfigurationError(
      "static-control coefficients need a scalar constant, power or "
      "exponential weight profile");
}

}  // namespace detail

/// Inner integrals in closed form; the outer integral of c2 by composite
/// trapezoid with panels no wider than the schedule step.
inline StaticCoefficients c1_c2(const ControlSchedule& w_schedule, double t) {
  const TimeGrid& grid = w_schedule.grid();
  if (!grid.contains(t)) {
    throw DomainError("c1_c2: time " + std::to_string(t) + " outside [" +
                      std::to_string(grid.t0()) + ", " +
                      std::to_string(grid.T()) + "]");
  }
  detail::weight_integral(w_schedule, grid.t0());  // validates the profile
  StaticCoefficients c;
  c.c1 = std::exp(detail::weight_integral(w_schedule, t));
  const double span = t - grid.t0();
  if (span <= 0.0) return c;
  const auto panels = static_cast<std::size_t>(
      std::max(1.0, std::ceil(span / grid.dt() - 1e-9)));
  c.c2 = trapezoid(
      [&](double s) { return std::exp(-detail::weight_integral(w_schedule, s)); },
      grid.t0(), t, panels);
  return c;
}

struct StaticControlResult {
  double b = 0.0;
  double c1T = 1.0;
  double c2T = 0.0;
};

/// Time-constant bias b = (y - x0 c1(T)) / (c1(T) c2(T)) steering x0 to y.
inline StaticControlResult static_control(double x0, double y,
                                          const ControlSchedule& w_schedule) {
  if (w_schedule.dim() != 1) {
    throw ConfigurationError("static control is defined for d = 1");
  }
  const TimeGrid& grid = w_schedule.grid();
  if (!(grid.T() > grid.t0())) {
    throw DomainError("static control needs T > t0");
  }
  const StaticCoefficients c = c1_c2(w_schedule, grid.T());
  const double denom = c.c1 * c.c2;
  if (!(std::abs(denom) >= 1e-14)) {
    throw DomainError("static control: degenerate horizon (c1*c2 = " +
                      std::to_string(denom) + ")");
  }
  return {(y - x0 * c.c1) / denom, c.c1, c.c2};
}

enum class FlowCase { power, exp };

/// Default Simpson panel count for the closed-form flows.
inline constexpr std::size_t kClosedFormPanels = 2048;

/// Phi(t) for w(t) = omega t^alpha (power) or omega e^{alpha t} (exp) and a
/// constant bias b, Phi(t0) = x0.
///
/// The bias term exp(E(t)) int exp(-E(s)) ds is folded into one integrand
/// exp(E(t) - E(s)) so it never overflows for strongly decaying weights.
inline double closed_form_flow(FlowCase flow_case, double omega, double alpha,
                               double b, double x0, double t0, double t,
                               std::size_t panels = kClosedFormPanels) {
  if (flow_case == FlowCase::power && alpha < 0.0) {
    throw ConfigurationError("power case needs alpha >= 0");
  }
  auto antiderivative = [&](double s) {
    if (flow_case == FlowCase::power) {
      return omega * std::pow(s, alpha + 1.0) / (alpha + 1.0);
    }
    if (alpha == 0.0) return omega * s;
    return omega * std::exp(alpha * s) / alpha;
  };
  const double Et = antiderivative(t);
  const double homogeneous = x0 * std::exp(Et - antiderivative(t0));
  if (t == t0 || b == 0.0) return homogeneous;
  const double forced = simpson(
      [&](double s) { return std::exp(Et - antiderivative(s)); }, t0, t, panels);
  return homogeneous + b * forced;
}

/// (x1, x2, x3): evolving state, frozen initial datum, frozen target.
struct ExtendedState {
  Vector x1;
  Vector x2;
  Vector x3;
};

using ExtendedBias = std::function<Vector(double, const Vector&, const Vector&)>;

/// Euler integration of x1' = w(t) x1 + b(t, x2, x3) with x2' = 0, x3' = 0.
///
/// Only the weights of the schedule are used. x2 and x3 are copied, never
/// updated.
inline std::vector<ExtendedState> integrate_extended(
    const Vector& x, const Vector& y, const ControlSchedule& w_schedule,
    const ExtendedBias& bias_fn) {
  const auto d = static_cast<Eigen::Index>(w_schedule.dim());
  if (x.size() != d || y.size() != d) {
    throw ConfigurationError("extended flow: x and y must be d-dimensional");
  }
  const TimeGrid& grid = w_schedule.grid();
  std::vector<ExtendedState> traj;
  traj.reserve(grid.size());
  traj.push_back({x, x, y});
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const double t = grid.time(k);
    const ExtendedState& cur = traj.back();
    const Vector b = bias_fn(t, cur.x2, cur.x3);
    if (b.size() != d) throw ConfigurationError("extended bias has wrong dimension");
    Vector next = cur.x1 + grid.dt() * (w_schedule.weight(t) * cur.x1 + b);
    try {
      detail::require_finite(next, "extended flow");
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at t = " +
                         std::to_string(grid.time(k + 1)));
    }
    traj.push_back({std::move(next), x, y});
  }
  return traj;
}

}  // namespace resflow
