#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "resflow/activation.hpp"
#include "resflow/control_schedule.hpp"
#include "resflow/dynamics.hpp"
#include "resflow/errors.hpp"
#include "resflow/random.hpp"

namespace resflow {

/// Whether the spread of a Gaussian initial datum is a variance or a standard
/// deviation.
enum class SpreadConvention { variance, std_dev };

/// Cell averages of a nonnegative density on [xmin, xmax].
class Density1D {
 public:
  Density1D(double xmin, double xmax, double dx, std::vector<double> cells)
      : xmin_(xmin), xmax_(xmax), dx_(dx), cells_(std::move(cells)) {
    if (!(xmax > xmin) || !(dx > 0.0)) {
      throw ConfigurationError("density grid needs xmax > xmin and dx > 0");
    }
    const double ratio = (xmax - xmin) / dx;
    const auto n = static_cast<std::size_t>(std::llround(ratio));
    if (n == 0 || std::abs(static_cast<double>(n) - ratio) > 1e-9 * ratio) {
      throw ConfigurationError("dx must divide the density interval");
    }
    if (cells_.size() != n) {
      throw ConfigurationError("density has " + std::to_string(cells_.size()) +
                               " cells, grid needs " + std::to_string(n));
    }
    for (double c : cells_) {
      if (!std::isfinite(c) || c < 0.0) {
        throw ConfigurationError("density cells must be finite and >= 0");
      }
    }
    update_mass();
  }

  static Density1D zeros(double xmin, double xmax, double dx) {
    const auto n = static_cast<std::size_t>(std::llround((xmax - xmin) / dx));
    return {xmin, xmax, dx, std::vector<double>(n, 0.0)};
  }

  /// Unit-mass constant density on the whole interval.
  static Density1D uniform(double xmin, double xmax, double dx) {
    const auto n = static_cast<std::size_t>(std::llround((xmax - xmin) / dx));
    return {xmin, xmax, dx, std::vector<double>(n, 1.0 / (xmax - xmin))};
  }

  /// Cell averages of N(mean, spread) from exact CDF differences, rescaled to
  /// unit mass on the interval.
  static Density1D gaussian(double xmin, double xmax, double dx, double mean,
                            double spread,
                            SpreadConvention convention = SpreadConvention::variance) {
    if (!(spread > 0.0)) throw ConfigurationError("gaussian spread must be > 0");
    const double sigma =
        convention == SpreadConvention::variance ? std::sqrt(spread) : spread;
    Density1D rho = zeros(xmin, xmax, dx);
    auto cdf = [&](double x) {
      return 0.5 * std::erfc(-(x - mean) / (sigma * std::sqrt(2.0)));
    };
    double total = 0.0;
    for (std::size_t j = 0; j < rho.size(); ++j) {
      rho.cells_[j] = (cdf(rho.edge(j + 1)) - cdf(rho.edge(j))) / dx;
      total += rho.cells_[j] * dx;
    }
    if (!(total > 0.0)) throw ConfigurationError("gaussian has no mass on grid");
    for (double& c : rho.cells_) c /= total;
    rho.update_mass();
    return rho;
  }

  double xmin() const noexcept { return xmin_; }
  double xmax() const noexcept { return xmax_; }
  double dx() const noexcept { return dx_; }
  std::size_t size() const noexcept { return cells_.size(); }
  const std::vector<double>& cells() const noexcept { return cells_; }
  double mass() const noexcept { return mass_; }

  /// j-th cell edge, j = 0..size(); the last edge is xmax exactly.
  double edge(std::size_t j) const noexcept {
    return j == cells_.size() ? xmax_ : xmin_ + static_cast<double>(j) * dx_;
  }
  double center(std::size_t j) const noexcept {
    return xmin_ + (static_cast<double>(j) + 0.5) * dx_;
  }

  /// First moment divided by mass.
  double mean() const {
    double m = 0.0;
    for (std::size_t j = 0; j < size(); ++j) m += center(j) * cells_[j] * dx_;
    return m / mass_;
  }

 private:
  friend Density1D fv_step(const Density1D&, double, double, Activation, double);

  void update_mass() {
    double m = 0.0;
    for (double c : cells_) m += c;
    mass_ = m * dx_;
  }

  double xmin_;
  double xmax_;
  double dx_;
  std::vector<double> cells_;
  double mass_ = 0.0;
};

/// Sorted point masses of equal weight 1/n.
class SampleSet {
 public:
  explicit SampleSet(std::vector<double> points) : points_(std::move(points)) {
    if (points_.empty()) throw ConfigurationError("sample set needs n >= 1");
    for (double p : points_) {
      if (!std::isfinite(p)) throw ConfigurationError("samples must be finite");
    }
    std::sort(points_.begin(), points_.end());
  }

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<double>& points() const noexcept { return points_; }

  double mean() const {
    double s = 0.0;
    for (double p : points_) s += p;
    return s / static_cast<double>(points_.size());
  }

 private:
  std::vector<double> points_;
};

/// Transport velocity sigma(w x + b).
inline double velocity_field(double x, double w, double b, Activation act) {
  return activate(act, w * x + b);
}

/// Upwind fluxes F at the size()+1 cell edges. Inflow edges carry no flux.
inline std::vector<double> interface_fluxes(const Density1D& rho, double w,
                                            double b, Activation act) {
  const std::size_t n = rho.size();
  const auto& c = rho.cells();
  std::vector<double> flux(n + 1, 0.0);
  for (std::size_t j = 0; j <= n; ++j) {
    const double v = velocity_field(rho.edge(j), w, b, act);
    if (v > 0.0) {
      flux[j] = j == 0 ? 0.0 : v * c[j - 1];
    } else if (v < 0.0) {
      flux[j] = j == n ? 0.0 : v * c[j];
    }
  }
  return flux;
}

/// Net rate of mass leaving through the two boundaries.
inline double boundary_outflow(const Density1D& rho, double w, double b,
                               Activation act) {
  const auto flux = interface_fluxes(rho, w, b, act);
  return flux.back() - flux.front();
}

/// Largest time step keeping every cell's total outflow within its content:
/// dt * (v+_{j+1/2} + v-_{j-1/2}) / dx <= 1. Infinite when nothing moves.
inline double admissible_dt(const Density1D& rho, double w, double b,
                            Activation act) {
  double worst = 0.0;
  double left = velocity_field(rho.edge(0), w, b, act);
  for (std::size_t j = 0; j < rho.size(); ++j) {
    const double right = velocity_field(rho.edge(j + 1), w, b, act);
    worst = std::max(worst, std::max(right, 0.0) + std::max(-left, 0.0));
    left = right;
  }
  return worst > 0.0 ? rho.dx() / worst : std::numeric_limits<double>::infinity();
}

/// One conservative first-order upwind step of d_t rho + d_x(v rho) = 0.
inline Density1D fv_step(const Density1D& rho, double w, double b,
                         Activation act, double dt) {
  if (!(dt > 0.0)) throw ConfigurationError("fv step: dt must be positive");
  const double limit = admissible_dt(rho, w, b, act);
  if (dt > limit * (1.0 + 1e-12)) {
    throw CflError("fv step: dt = " + std::to_string(dt) +
                       " violates the CFL condition; admissible dt <= " +
                       std::to_string(limit),
                   limit);
  }
  const auto flux = interface_fluxes(rho, w, b, act);
  Density1D next = rho;
  const double ratio = dt / rho.dx();
  for (std::size_t j = 0; j < rho.size(); ++j) {
    // Under the CFL bound the update is a convex combination; clamp the
    // rounding residue at zero.
    next.cells_[j] = std::max(0.0, rho.cells_[j] - ratio * (flux[j + 1] - flux[j]));
  }
  next.update_mass();
  return next;
}

/// Repeated fv_step over the schedule grid (d = 1).
inline Density1D solve_meanfield(const Density1D& rho0,
                                 const ControlSchedule& ctrl, Activation act) {
  if (ctrl.dim() != 1) throw ConfigurationError("mean-field solver needs d = 1");
  const TimeGrid& grid = ctrl.grid();
  Density1D rho = rho0;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const double t = grid.time(k);
    try {
      rho = fv_step(rho, ctrl.weight(t)(0, 0), ctrl.bias(t)(0), act, grid.dt());
    } catch (const CflError& e) {
      throw CflError(std::string(e.what()) + " at t = " + std::to_string(t),
                     e.admissible_dt());
    }
  }
  return rho;
}

/// n draws from the piecewise-constant density: cell by inverse CDF, position
/// uniform inside the cell.
inline std::vector<double> draw_samples(const Density1D& rho, std::size_t n,
                                        Rng& rng) {
  if (!(rho.mass() > 0.0)) throw ConfigurationError("cannot sample a zero density");
  std::vector<double> cdf(rho.size() + 1, 0.0);
  for (std::size_t j = 0; j < rho.size(); ++j) {
    cdf[j + 1] = cdf[j] + rho.cells()[j] * rho.dx();
  }
  for (double& c : cdf) c /= cdf.back();
  std::vector<double> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = uniform01(rng);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t j = static_cast<std::size_t>(it - cdf.begin());
    j = std::clamp<std::size_t>(j == 0 ? 0 : j - 1, 0, rho.size() - 1);
    out[s] = rho.edge(j) + rho.dx() * uniform01(rng);
  }
  return out;
}

/// n draws with replacement from the sample set.
inline std::vector<double> draw_samples(const SampleSet& set, std::size_t n,
                                        Rng& rng) {
  std::vector<double> out(n);
  const auto m = set.size();
  for (std::size_t s = 0; s < n; ++s) {
    out[s] = set.points()[std::min(m - 1, static_cast<std::size_t>(
                                              uniform01(rng) * static_cast<double>(m)))];
  }
  return out;
}

/// Push-forward of n draws from rho0 through the Euler flow of the schedule.
inline SampleSet push_forward_particles(std::size_t n, const Density1D& rho0,
                                        const ControlSchedule& ctrl,
                                        Activation act, Rng& rng,
                                        std::size_t threads = 1) {
  if (n == 0) throw ConfigurationError("push-forward needs n >= 1");
  if (ctrl.dim() != 1) throw ConfigurationError("push-forward needs d = 1");
  const std::vector<double> start = draw_samples(rho0, n, rng);
  const auto ens = ParticleEnsemble::scalar(start, 0.0);
  const auto finals = integrate_ensemble(ens, ctrl, act, threads);
  std::vector<double> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = finals[i](0);
  return SampleSet(std::move(pts));
}

namespace detail {

/// Integral over [l, r] of |g| for g linear with g(l) = g0, g(r) = g1.
inline double abs_linear_integral(double g0, double g1, double length) {
  if ((g0 >= 0.0 && g1 >= 0.0) || (g0 <= 0.0 && g1 <= 0.0)) {
    return 0.5 * length * (std::abs(g0) + std::abs(g1));
  }
  return 0.5 * length * (g0 * g0 + g1 * g1) / (std::abs(g0) + std::abs(g1));
}

/// CDF of a normalized density, linear inside cells.
inline double density_cdf(const Density1D& rho, double x) {
  if (x <= rho.xmin()) return 0.0;
  if (x >= rho.xmax()) return 1.0;
  const auto j = std::min(rho.size() - 1,
                          static_cast<std::size_t>((x - rho.xmin()) / rho.dx()));
  double acc = 0.0;
  for (std::size_t i = 0; i < j; ++i) acc += rho.cells()[i] * rho.dx();
  acc += rho.cells()[j] * (x - rho.edge(j));
  return std::clamp(acc / rho.mass(), 0.0, 1.0);
}

/// CDF of the sample set on the open interval right of x.
inline double sample_cdf_right(const SampleSet& s, double x) {
  const auto it = std::upper_bound(s.points().begin(), s.points().end(), x);
  return static_cast<double>(it - s.points().begin()) /
         static_cast<double>(s.size());
}

inline void append_edges(const Density1D& rho, std::vector<double>& pts) {
  for (std::size_t j = 0; j <= rho.size(); ++j) pts.push_back(rho.edge(j));
}

inline void append_edges(const SampleSet& s, std::vector<double>& pts) {
  pts.insert(pts.end(), s.points().begin(), s.points().end());
}

/// (F(l+), F(r-)) on an interval free of breakpoints.
inline std::pair<double, double> cdf_on(const Density1D& rho, double l, double r) {
  return {density_cdf(rho, l), density_cdf(rho, r)};
}

inline std::pair<double, double> cdf_on(const SampleSet& s, double l, double) {
  const double v = sample_cdf_right(s, l);
  return {v, v};
}

/// int |F_a - F_b| dx over the merged breakpoints; exact for the two
/// piecewise-linear-or-constant CDFs.
template <class A, class B>
double cdf_l1(const A& a, const B& b) {
  std::vector<double> pts;
  append_edges(a, pts);
  append_edges(b, pts);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double l = pts[k];
    const double r = pts[k + 1];
    const auto [a0, a1] = cdf_on(a, l, r);
    const auto [b0, b1] = cdf_on(b, l, r);
    total += abs_linear_integral(a0 - b0, a1 - b1, r - l);
  }
  return total;
}

}  // namespace detail

/// Exact 1-Wasserstein distance between two uniform-weight sample sets.
///
/// Equal sizes use sorted order statistics; unequal sizes integrate the
/// difference of the two quantile functions exactly (no resampling).
inline double wasserstein1(const SampleSet& a, const SampleSet& b) {
  const auto& pa = a.points();
  const auto& pb = b.points();
  if (pa.size() == pb.size()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) sum += std::abs(pa[i] - pb[i]);
    return sum / static_cast<double>(pa.size());
  }
  const double na = static_cast<double>(pa.size());
  const double nb = static_cast<double>(pb.size());
  double sum = 0.0;
  double u = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < pa.size() && j < pb.size()) {
    const double next = std::min(static_cast<double>(i + 1) / na,
                                 static_cast<double>(j + 1) / nb);
    sum += (next - u) * std::abs(pa[i] - pb[j]);
    u = next;
    if (static_cast<double>(i + 1) / na <= u) ++i;
    if (static_cast<double>(j + 1) / nb <= u) ++j;
  }
  return sum;
}

/// Exact 1-Wasserstein distance between a sample set and a density.
inline double wasserstein1(const SampleSet& a, const Density1D& b) {
  return detail::cdf_l1(a, b);
}

inline double wasserstein1(const Density1D& a, const SampleSet& b) {
  return detail::cdf_l1(a, b);
}

/// Exact 1-Wasserstein distance between two densities (each normalized).
inline double wasserstein1(const Density1D& a, const Density1D& b) {
  return detail::cdf_l1(a, b);
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t repeats = 0;
};

/// Monte-Carlo estimate of int int l(x - y) dnu(y) dmu_T(x).
///
/// Each repeat draws n_samples points from mu_T and from nu on independent
/// streams and averages l over all n_samples^2 pairs. The result is the mean
/// over repeats with its standard error.
template <class MuT, class Nu>
MonteCarloEstimate loss_meanfield(const MuT& mu_T, const Nu& nu, LossKind ell,
                                  std::size_t n_samples, std::size_t repeats,
                                  std::uint64_t seed) {
  if (n_samples == 0 || repeats == 0) {
    throw ConfigurationError("loss_meanfield needs n_samples >= 1 and repeats >= 1");
  }
  std::vector<double> estimates(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rx = make_rng(seed, Stream::mf_loss, 2 * r);
    Rng ry = make_rng(seed, Stream::mf_loss, 2 * r + 1);
    const auto xs = draw_samples(mu_T, n_samples, rx);
    const auto ys = draw_samples(nu, n_samples, ry);
    double sum = 0.0;
    for (double x : xs) {
      for (double y : ys) {
        const double z = x - y;
        sum += ell == LossKind::abs ? std::abs(z) : z * z;
      }
    }
    estimates[r] = sum / static_cast<double>(n_samples * n_samples);
  }
  MonteCarloEstimate out;
  out.repeats = repeats;
  for (double e : estimates) out.mean += e;
  out.mean /= static_cast<double>(repeats);
  if (repeats > 1) {
    double var = 0.0;
    for (double e : estimates) var += (e - out.mean) * (e - out.mean);
    var /= static_cast<double>(repeats - 1);
    out.std_error = std::sqrt(var / static_cast<double>(repeats));
  }
  return out;
}

}  // namespace resflow
