#pragma once

#include <cstddef>
#include <span>

#include "resflow/errors.hpp"

namespace resflow {

/// Composite trapezoid rule for samples on a uniform grid of spacing h.
inline double trapezoid(std::span<const double> values, double h) {
  if (values.size() < 2) return 0.0;
  double interior = 0.0;
  for (std::size_t k = 1; k + 1 < values.size(); ++k) interior += values[k];
  return h * (0.5 * (values.front() + values.back()) + interior);
}

/// Composite trapezoid rule on [a, b] with n panels.
template <class F>
double trapezoid(F&& f, double a, double b, std::size_t panels) {
  if (panels == 0) throw ConfigurationError("trapezoid needs >= 1 panel");
  const double h = (b - a) / static_cast<double>(panels);
  double sum = 0.5 * (f(a) + f(b));
  for (std::size_t k = 1; k < panels; ++k) sum += f(a + static_cast<double>(k) * h);
  return h * sum;
}

/// Composite Simpson rule on [a, b]; an odd panel count is rounded up.
template <class F>
double simpson(F&& f, double a, double b, std::size_t panels) {
  if (panels == 0) throw ConfigurationError("simpson needs >= 1 panel");
  if (panels % 2 != 0) ++panels;
  const double h = (b - a) / static_cast<double>(panels);
  double odd = 0.0;
  double even = 0.0;
  for (std::size_t k = 1; k < panels; ++k) {
    const double v = f(a + static_cast<double>(k) * h);
    (k % 2 == 1 ? odd : even) += v;
  }
  return h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even);
}

}  // namespace resflow
