#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "resflow/errors.hpp"
#include "resflow/surrogate.hpp"

namespace resflow {

/// Admissible (w, b) rectangle.
struct BoxDomain {
  double w_min = 0.0;
  double w_max = 0.25;
  double b_min = 0.0;
  double b_max = 2.5e-3;

  void validate() const {
    if (!(w_min < w_max) || !(b_min < b_max)) {
      throw ConfigurationError("box needs w_min < w_max and b_min < b_max");
    }
  }

  bool contains(const ParamPoint& p) const noexcept {
    return p.w >= w_min && p.w <= w_max && p.b >= b_min && p.b <= b_max;
  }

  std::array<ParamPoint, 4> corners() const noexcept {
    return {ParamPoint{w_min, b_min}, ParamPoint{w_max, b_min},
            ParamPoint{w_min, b_max}, ParamPoint{w_max, b_max}};
  }
};

inline ParamPoint project(const ParamPoint& p, const BoxDomain& box) {
  box.validate();
  return {std::clamp(p.w, box.w_min, box.w_max), std::clamp(p.b, box.b_min, box.b_max)};
}

/// Corner of the box with the largest Euclidean distance to `target`.
inline ParamPoint farthest_corner(const BoxDomain& box, const ParamPoint& target) {
  const auto corners = box.corners();
  return *std::max_element(corners.begin(), corners.end(),
                           [&](const ParamPoint& a, const ParamPoint& c) {
                             return std::hypot(a.w - target.w, a.b - target.b) <
                                    std::hypot(c.w - target.w, c.b - target.b);
                           });
}

enum class StopReason { max_iters, small_step, small_grad };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::max_iters: return "max_iters";
    case StopReason::small_step: return "small_step";
    case StopReason::small_grad: return "small_grad";
  }
  return "unknown";
}

struct DescentOptions {
  double step = 1e-5;
  std::size_t max_iters = 100000;
  double grad_tol = 1e-8;
  double step_tol = 0.0;  ///< 0 disables the step criterion
};

struct DescentIterate {
  ParamPoint point;
  double objective = 0.0;
};

struct DescentTrace {
  std::vector<DescentIterate> iterates;  ///< iterate 0 is the projected start
  double step_size = 0.0;
  DescentOptions options;
  StopReason stop_reason = StopReason::max_iters;

  const DescentIterate& last() const { return iterates.back(); }
};

/// p <- project(p - step * grad(p)); every iterate is recorded.
template <class Objective, class Gradient>
DescentTrace pgd(Objective&& objective, Gradient&& gradient, const ParamPoint& start,
                 const BoxDomain& box, const DescentOptions& opts = {}) {
  box.validate();
  if (!(opts.step > 0.0)) throw ConfigurationError("descent step must be > 0");
  if (!(opts.grad_tol >= 0.0) || !(opts.step_tol >= 0.0)) {
    throw ConfigurationError("descent tolerances must be >= 0");
  }
  if (!box.contains(start)) throw DomainError("descent start lies outside the box");

  DescentTrace trace;
  trace.step_size = opts.step;
  trace.options = opts;
  trace.iterates.reserve(std::min<std::size_t>(opts.max_iters, 1u << 20) + 1);

  auto checked_objective = [&](const ParamPoint& p, std::size_t k) {
    const double f = objective(p);
    if (!std::isfinite(f)) {
      throw NumericError("non-finite objective at iterate " + std::to_string(k));
    }
    return f;
  };

  ParamPoint p = start;
  trace.iterates.push_back({p, checked_objective(p, 0)});
  for (std::size_t k = 0; k < opts.max_iters; ++k) {
    const ParamPoint g = gradient(p);
    if (!std::isfinite(g.w) || !std::isfinite(g.b)) {
      throw NumericError("non-finite gradient at iterate " + std::to_string(k));
    }
    if (std::hypot(g.w, g.b) <= opts.grad_tol) {
      trace.stop_reason = StopReason::small_grad;
      return trace;
    }
    const ParamPoint next = project({p.w - opts.step * g.w, p.b - opts.step * g.b}, box);
    const double moved = std::hypot(next.w - p.w, next.b - p.b);
    p = next;
    trace.iterates.push_back({p, checked_objective(p, k + 1)});
    if (opts.step_tol > 0.0 && moved <= opts.step_tol) {
      trace.stop_reason = StopReason::small_step;
      return trace;
    }
  }
  trace.stop_reason = StopReason::max_iters;
  return trace;
}

template <class Real>
DescentTrace pgd(const BasicKernelSurrogate<Real>& s, const ParamPoint& start,
                 const BoxDomain& box, const DescentOptions& opts = {}) {
  return pgd([&](const ParamPoint& p) { return s.evaluate(p); },
             [&](const ParamPoint& p) { return s.gradient(p); }, start, box, opts);
}

}  // namespace resflow
