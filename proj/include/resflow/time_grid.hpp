#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "resflow/errors.hpp"

namespace resflow {

/// Uniform grid t0, t0 + dt, ..., T. The step must divide the horizon.
class TimeGrid {
 public:
  TimeGrid(double t0, double T, double dt) : t0_(t0), T_(T), dt_(dt) {
    if (!std::isfinite(t0) || !std::isfinite(T) || !std::isfinite(dt)) {
      throw ConfigurationError("time grid bounds must be finite");
    }
    if (!(dt > 0.0)) throw ConfigurationError("time step must be positive");
    if (T < t0) throw ConfigurationError("final time precedes initial time");
    const double span = T - t0;
    const double ratio = span / dt;
    steps_ = static_cast<std::size_t>(std::llround(ratio));
    if (std::abs(static_cast<double>(steps_) * dt - span) >
        1e-12 * std::max(1.0, std::abs(span))) {
      throw ConfigurationError("time step " + std::to_string(dt) +
                               " does not divide the horizon [" +
                               std::to_string(t0) + ", " + std::to_string(T) +
                               "]");
    }
  }

  double t0() const noexcept { return t0_; }
  double T() const noexcept { return T_; }
  double dt() const noexcept { return dt_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return steps_ + 1; }

  /// k-th grid time; the last point is T exactly.
  double time(std::size_t k) const noexcept {
    return k == steps_ ? T_ : t0_ + static_cast<double>(k) * dt_;
  }

  bool contains(double t) const noexcept {
    const double tol = 1e-12 * std::max(1.0, std::abs(T_));
    return t >= t0_ - tol && t <= T_ + tol;
  }

 private:
  double t0_;
  double T_;
  double dt_;
  std::size_t steps_ = 0;
};

}  // namespace resflow
