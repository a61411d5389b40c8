#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "resflow/activation.hpp"
#include "resflow/control_schedule.hpp"
#include "resflow/controllability.hpp"
#include "resflow/dynamics.hpp"
#include "resflow/io/config.hpp"
#include "resflow/io/csv.hpp"
#include "resflow/io/manifest.hpp"
#include "resflow/io/surrogate_json.hpp"
#include "resflow/io/svg.hpp"
#include "resflow/meanfield.hpp"
#include "resflow/optimize.hpp"
#include "resflow/parallel.hpp"
#include "resflow/random.hpp"
#include "resflow/surrogate.hpp"
#include "resflow/time_grid.hpp"

namespace resflow::experiments {

inline constexpr std::uint64_t kDefaultSeed = 20240607;

struct Context {
  io::Config cfg;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 1;
};

/// Uniform (w, b) lattice over a box. Index j * nw + i holds (w_i, b_j).
struct ParamGrid {
  BoxDomain box;
  std::size_t nw = 0;
  std::size_t nb = 0;
  double hw = 0.0;
  double hb = 0.0;

  std::size_t size() const noexcept { return nw * nb; }
  ParamPoint at(std::size_t i, std::size_t j) const {
    return {box.w_min + static_cast<double>(i) * hw, box.b_min + static_cast<double>(j) * hb};
  }
  ParamPoint point(std::size_t flat) const { return at(flat % nw, flat / nw); }
  std::vector<ParamPoint> points() const {
    std::vector<ParamPoint> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = point(k);
    return out;
  }
  /// Midpoint of the first and last lattice values on each axis.
  ParamPoint center() const {
    const ParamPoint last = at(nw - 1, nb - 1);
    return {0.5 * (box.w_min + last.w), 0.5 * (box.b_min + last.b)};
  }
};

/// Lattice with step h along w and the proportional step h * (b range / w range)
/// along b, so both axes get the same number of points.
inline ParamGrid make_param_grid(const BoxDomain& box, double h) {
  box.validate();
  if (!(h > 0.0)) throw ConfigurationError("grid step must be > 0");
  ParamGrid g;
  g.box = box;
  const double wr = box.w_max - box.w_min;
  const double br = box.b_max - box.b_min;
  g.hw = h;
  g.hb = h * br / wr;
  g.nw = static_cast<std::size_t>(std::floor(wr / h + 1e-9)) + 1;
  g.nb = static_cast<std::size_t>(std::floor(br / g.hb + 1e-9)) + 1;
  return g;
}

/// One random lattice index per block of an r_w x r_b partition of the grid.
/// r_w * r_b = N with the factor pair closest to square (larger factor on w).
inline std::vector<std::size_t> stratified_nodes(const ParamGrid& grid, std::size_t N,
                                                 Rng& rng) {
  if (N == 0 || N > grid.size()) throw ConfigurationError("node count must be in [1, grid size]");
  std::size_t rb = 1;
  for (std::size_t f = 1; f * f <= N; ++f) {
    if (N % f == 0) rb = f;
  }
  std::size_t rw = N / rb;
  if (rw > grid.nw || rb > grid.nb) {
    throw ConfigurationError("grid too small for " + std::to_string(N) + " stratified nodes");
  }
  std::vector<std::size_t> out;
  out.reserve(N);
  for (std::size_t bj = 0; bj < rb; ++bj) {
    const std::size_t j0 = bj * grid.nb / rb;
    const std::size_t j1 = (bj + 1) * grid.nb / rb;
    for (std::size_t bi = 0; bi < rw; ++bi) {
      const std::size_t i0 = bi * grid.nw / rw;
      const std::size_t i1 = (bi + 1) * grid.nw / rw;
      const auto i = i0 + std::min(i1 - i0 - 1, static_cast<std::size_t>(
                                                    uniform01(rng) * static_cast<double>(i1 - i0)));
      const auto j = j0 + std::min(j1 - j0 - 1, static_cast<std::size_t>(
                                                    uniform01(rng) * static_cast<double>(j1 - j0)));
      out.push_back(j * grid.nw + i);
    }
  }
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v)) throw ConfigurationError("invalid list entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

/// "w,b;w,b;..." node list.
inline std::vector<ParamPoint> parse_points(const std::string& text) {
  std::vector<ParamPoint> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto v = parse_list<double>(item);
    if (v.empty()) continue;
    if (v.size() != 2) throw ConfigurationError("node '" + item + "' needs w,b");
    out.push_back({v[0], v[1]});
  }
  return out;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

inline void prepare(const Context& ctx) { std::filesystem::create_directories(ctx.out_dir); }

inline BoxDomain read_box(const io::Config& cfg, const std::string& section) {
  BoxDomain box{cfg.get(section + ".w_min", 0.0), cfg.get(section + ".w_max", 0.25),
                cfg.get(section + ".b_min", 0.0), cfg.get(section + ".b_max", 2.5e-3)};
  box.validate();
  return box;
}

inline DescentOptions read_descent(const io::Config& cfg, const std::string& section) {
  DescentOptions o;
  o.step = cfg.get(section + ".step", 1e-5);
  o.max_iters = cfg.get<std::size_t>(section + ".max_iters", 100000);
  o.grad_tol = cfg.get(section + ".grad_tol", 1e-8);
  o.step_tol = cfg.get(section + ".step_tol", 0.0);
  return o;
}

inline std::size_t argmin(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

/// Largest |f(q) - f(p*)| over lattice points within `cells` of the minimizer.
inline double neighborhood_range(const ParamGrid& grid, const std::vector<double>& f,
                                 std::size_t best, std::size_t cells) {
  const auto bi = static_cast<long>(best % grid.nw);
  const auto bj = static_cast<long>(best / grid.nw);
  double range = 0.0;
  for (long j = bj - static_cast<long>(cells); j <= bj + static_cast<long>(cells); ++j) {
    for (long i = bi - static_cast<long>(cells); i <= bi + static_cast<long>(cells); ++i) {
      if (i < 0 || j < 0 || i >= static_cast<long>(grid.nw) || j >= static_cast<long>(grid.nb)) continue;
      range = std::max(range, std::abs(f[static_cast<std::size_t>(j) * grid.nw +
                                         static_cast<std::size_t>(i)] - f[best]));
    }
  }
  return range;
}

inline void write_field_csv(const std::filesystem::path& path, const std::string& column,
                            const ParamGrid& grid, const std::vector<double>& values) {
  io::CsvWriter csv(path, {"w", "b", column});
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const ParamPoint p = grid.point(k);
    csv.row({p.w, p.b, values[k]});
  }
}

/// Objective rises along the trace after `skip` iterations, measured against a
/// rounding bound of the surrogate evaluation at both iterates.
struct MonotoneCheck {
  std::size_t violations = 0;
  double max_increase = 0.0;
  double max_excess = 0.0;  ///< largest increase minus its rounding bound
};

template <class Real>
MonotoneCheck check_monotone(const BasicKernelSurrogate<Real>& s, const DescentTrace& trace,
                             std::size_t skip) {
  MonotoneCheck c;
  c.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = skip; k + 1 < trace.iterates.size(); ++k) {
    const auto& a = trace.iterates[k];
    const auto& b = trace.iterates[k + 1];
    const double rise = b.objective - a.objective;
    const double tol = s.evaluation_error_bound(a.point) + s.evaluation_error_bound(b.point);
    c.max_increase = std::max(c.max_increase, rise);
    c.max_excess = std::max(c.max_excess, rise - tol);
    if (rise > tol) ++c.violations;
  }
  if (!std::isfinite(c.max_excess)) c.max_excess = 0.0;
  return c;
}

inline void write_trace_csv(const std::filesystem::path& path, const DescentTrace& trace) {
  io::CsvWriter csv(path, {"iter", "w", "b", "objective"});
  for (std::size_t k = 0; k < trace.iterates.size(); ++k) {
    const auto& it = trace.iterates[k];
    csv.row({static_cast<double>(k), it.point.w, it.point.b, it.objective});
  }
}

inline io::Series trace_series(const DescentTrace& trace, const std::string& label) {
  io::Series s{label, {}, {}};
  const std::size_t n = trace.iterates.size();
  const std::size_t stride = std::max<std::size_t>(1, n / 2000);
  for (std::size_t k = 0; k < n; k += stride) {
    s.x.push_back(static_cast<double>(k));
    s.y.push_back(trace.iterates[k].objective);
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------- decay

struct DecayCurve {
  std::string label;
  FlowCase flow_case = FlowCase::power;
  double alpha = 0.0;
  double b = 0.0;
  double terminal_error = 0.0;          ///< |Phi(T) - y|, Euler
  double closed_form_terminal_error = 0.0;
  double crossing = std::numeric_limits<double>::infinity();  ///< first t with |Phi| <= threshold
  std::vector<double> euler;
  std::vector<double> closed_form;
};

struct DecayResult {
  std::vector<double> times;
  std::vector<DecayCurve> curves;  ///< (a), (b), (c)
  double threshold = 0.2;
  double seconds = 0.0;
};

/// First time |phi| falls to `level`, linearly interpolated between grid points.
inline double crossing_time(const std::vector<double>& t, const std::vector<double>& phi,
                            double level) {
  for (std::size_t k = 0; k < phi.size(); ++k) {
    if (std::abs(phi[k]) <= level) {
      if (k == 0) return t[0];
      const double a = std::abs(phi[k - 1]);
      const double b = std::abs(phi[k]);
      return t[k - 1] + (t[k] - t[k - 1]) * (a - level) / (a - b);
    }
  }
  return std::numeric_limits<double>::infinity();
}

inline DecayResult run_decay(const Context& ctx) {
  const auto start = detail::Clock::now();
  detail::prepare(ctx);
  const auto& cfg = ctx.cfg;
  const double x0 = cfg.get("decay.x0", 2.0);
  const double y = cfg.get("decay.y", 0.0);
  const TimeGrid grid(cfg.get("decay.t0", 0.0), cfg.get("decay.T", 1.0), cfg.get("decay.dt", 0.01));
  const double omega_ab = cfg.get("decay.omega", -3.0);
  const double omega_c = cfg.get("decay.omega_c", omega_ab);

  DecayResult res;
  res.threshold = cfg.get("decay.threshold", 0.2);
  for (std::size_t k = 0; k < grid.size(); ++k) res.times.push_back(grid.time(k));

  struct Spec {
    std::string label;
    FlowCase c;
    double omega;
    double alpha;
  };
  const std::vector<Spec> specs = {
      {"a", FlowCase::power, omega_ab, cfg.get("decay.alpha_a", 0.0)},
      {"b", FlowCase::power, omega_ab, cfg.get("decay.alpha_b", 4.0)},
      {"c", FlowCase::exp, omega_c, cfg.get("decay.alpha_c", 4.0)},
  };
  for (const auto& s : specs) {
    const ControlSchedule w = s.c == FlowCase::power
                                  ? ControlSchedule::power_profile(s.omega, s.alpha, 0.0, grid)
                                  : ControlSchedule::exp_profile(s.omega, s.alpha, 0.0, grid);
    DecayCurve curve;
    curve.label = s.label;
    curve.flow_case = s.c;
    curve.alpha = s.alpha;
    curve.b = static_control(x0, y, w).b;
    const Vector bias = Vector::Constant(1, curve.b);
    const Trajectory traj = integrate_ode(Vector::Constant(1, x0), w.with_bias(bias),
                                          Activation::identity);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      curve.euler.push_back(traj.states[k](0));
      curve.closed_form.push_back(
          closed_form_flow(s.c, s.omega, s.alpha, curve.b, x0, grid.t0(), grid.time(k)));
    }
    curve.terminal_error = std::abs(curve.euler.back() - y);
    curve.closed_form_terminal_error = std::abs(curve.closed_form.back() - y);
    curve.crossing = crossing_time(res.times, curve.euler, res.threshold);
    res.curves.push_back(std::move(curve));
  }

  io::RunManifest manifest("decay", ctx.out_dir, ctx.seed);
  {
    io::CsvWriter csv(ctx.out_dir / "decay.csv", {"t", "phi_a", "phi_b", "phi_c"});
    for (std::size_t k = 0; k < grid.size(); ++k) {
      csv.row({res.times[k], res.curves[0].euler[k], res.curves[1].euler[k], res.curves[2].euler[k]});
    }
    io::CsvWriter cf(ctx.out_dir / "decay_closed_form.csv", {"t", "phi_a", "phi_b", "phi_c"});
    for (std::size_t k = 0; k < grid.size(); ++k) {
      cf.row({res.times[k], res.curves[0].closed_form[k], res.curves[1].closed_form[k],
              res.curves[2].closed_form[k]});
    }
  }
  std::vector<io::Series> series;
  const char* names[] = {"(a) power a=0", "(b) power a=4", "(c) exp a=4"};
  for (std::size_t c = 0; c < 3; ++c) series.push_back({names[c], res.times, res.curves[c].euler});
  io::write_line_svg(ctx.out_dir / "decay.svg", "Static control decay", "t", "Phi(t)", series);
  for (const char* f : {"decay.csv", "decay_closed_form.csv", "decay.svg"}) manifest.add_file(f);
  manifest.assumption("omega_all_curves", omega_ab);
  manifest.assumption("omega_curve_c", omega_c);
  for (const auto& c : res.curves) {
    manifest.metadata("b_" + c.label, c.b);
    manifest.metadata("terminal_error_" + c.label, c.terminal_error);
    manifest.metadata("crossing_" + c.label, c.crossing);
  }
  res.seconds = detail::seconds_since(start);
  manifest.set_wall_clock(res.seconds);
  manifest.write(cfg);
  return res;
}

// ---------------------------------------------------------------- microscopic

struct MicroSetup {
  ParticleEnsemble data;  ///< targets all equal y
  TimeGrid grid;
  Activation act = Activation::relu;
  LossKind loss = LossKind::square;
  ParamGrid params;
  double y = 0.0;
  double gamma = 1e-2;
  std::size_t nodes = 20;
};

/// Ensemble mean of the final states under a constant (w, b).
inline double micro_final_mean(const MicroSetup& s, const ParamPoint& p, std::size_t threads = 1) {
  const auto ctrl = ControlSchedule::constant(p.w, p.b, s.grid);
  const auto finals = integrate_ensemble(s.data, ctrl, s.act, threads);
  double m = 0.0;
  for (const auto& x : finals) m += x(0);
  return m / static_cast<double>(finals.size());
}

inline double micro_loss(const MicroSetup& s, const ParamPoint& p) {
  const auto ctrl = ControlSchedule::constant(p.w, p.b, s.grid);
  return loss_micro(integrate_ensemble(s.data, ctrl, s.act), s.data.targets(), s.loss);
}

inline MicroSetup micro_setup(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto M = cfg.get<std::size_t>("micro.particles", 50);
  const double lo = cfg.get("micro.x_min", 1.0);
  const double hi = cfg.get("micro.x_max", 2.0);
  if (M == 0 || !(lo < hi)) throw ConfigurationError("micro: need particles >= 1 and x_min < x_max");
  Rng rng = make_rng(ctx.seed, Stream::micro_data);
  std::vector<double> x0(M);
  for (auto& x : x0) x = uniform(rng, lo, hi);

  const TimeGrid grid(cfg.get("micro.t0", 0.0), cfg.get("micro.T", 10.0), cfg.get("micro.dt", 0.01));
  const Activation act = parse_activation(cfg.get("micro.activation", "relu"));
  const ParamGrid params =
      make_param_grid(detail::read_box(cfg, "micro"), cfg.get("micro.grid_step", 0.01));

  MicroSetup probe{ParticleEnsemble::scalar(x0, 0.0), grid, act,
                   parse_loss_kind(cfg.get("micro.loss", "square")), params};
  const ParamPoint c = params.center();
  const double y = cfg.has("micro.target") ? cfg.get("micro.target", 0.0)
                                           : micro_final_mean(probe, c, ctx.threads);
  probe.data = ParticleEnsemble::scalar(x0, y);
  probe.y = y;
  probe.gamma = cfg.get("micro.gamma", 1e-2);
  probe.nodes = cfg.get<std::size_t>("micro.nodes", 20);
  return probe;
}

struct SurfaceResult {
  ParamGrid grid;
  std::vector<double> truth;
  std::vector<double> truth_stderr;  ///< Monte-Carlo standard errors (mean-field only)
  std::vector<double> surrogate_values;
  std::vector<ParamPoint> nodes;
  std::vector<double> node_values;
  KernelSurrogate surrogate{1.0, {Eigen::VectorXd::Zero(2)}, {0.0L}};
  RelativeErrorField relerr;
  double node_residual_max = 0.0;  ///< max relative residual at the nodes
  double seconds = 0.0;
};

namespace detail {

/// Node set from "<section>.node_list" or stratified sampling of the grid.
inline std::vector<std::size_t> choose_nodes(const Context& ctx, const std::string& section,
                                             const ParamGrid& grid, std::size_t N, Stream stream,
                                             std::vector<ParamPoint>& explicit_nodes) {
  const std::string listed = ctx.cfg.get(section + ".node_list", "");
  explicit_nodes = parse_points(listed);
  if (!explicit_nodes.empty()) return {};
  Rng rng = make_rng(ctx.seed, stream);
  return stratified_nodes(grid, N, rng);
}

/// Values at the nodes: lattice nodes reuse the truth field, listed nodes are
/// evaluated directly.
template <class Loss>
void fit_surface(SurfaceResult& res, const Context& ctx, const std::string& section,
                 std::size_t N, double gamma, Stream stream, Loss&& loss) {
  std::vector<ParamPoint> listed;
  const auto idx = choose_nodes(ctx, section, res.grid, N, stream, listed);
  if (listed.empty()) {
    for (auto k : idx) {
      res.nodes.push_back(res.grid.point(k));
      res.node_values.push_back(res.truth[k]);
    }
  } else {
    res.nodes = listed;
    for (const auto& p : listed) res.node_values.push_back(loss(p));
  }
  const double lambda = ctx.cfg.get(section + ".ridge_lambda", 0.0);
  const double noise = ctx.cfg.get(section + ".noise_cov", 0.0);
  res.surrogate = (lambda > 0.0 || noise > 0.0)
                      ? fit_ridge(res.nodes, res.node_values, gamma, lambda, noise)
                      : fit_interpolation(res.nodes, res.node_values, gamma);
  res.surrogate_values.resize(res.grid.size());
  for (std::size_t k = 0; k < res.grid.size(); ++k) {
    res.surrogate_values[k] = res.surrogate.evaluate(res.grid.point(k));
  }
  res.relerr = relative_error_field(res.surrogate, res.truth, res.grid.points());
  for (std::size_t n = 0; n < res.nodes.size(); ++n) {
    const double v = res.node_values[n];
    const double r = std::abs(res.surrogate.evaluate(res.nodes[n]) - v) /
                     std::max(std::abs(v), kRelativeErrorFloor);
    res.node_residual_max = std::max(res.node_residual_max, r);
  }
}

inline void write_surface(const Context& ctx, io::RunManifest& manifest, const SurfaceResult& res,
                          const std::string& tag) {
  write_field_csv(ctx.out_dir / "loss_true.csv", "loss", res.grid, res.truth);
  write_field_csv(ctx.out_dir / "loss_surrogate.csv", "loss", res.grid, res.surrogate_values);
  write_field_csv(ctx.out_dir / "relerr.csv", "relerr", res.grid, res.relerr.values);
  {
    io::CsvWriter csv(ctx.out_dir / "nodes.csv", {"w", "b", "loss"});
    for (std::size_t n = 0; n < res.nodes.size(); ++n) {
      csv.row({res.nodes[n].w, res.nodes[n].b, res.node_values[n]});
    }
  }
  io::write_heatmap_svg(ctx.out_dir / "loss_true.svg", tag + " loss", res.grid.nw, res.grid.nb,
                        res.truth);
  io::write_heatmap_svg(ctx.out_dir / "loss_surrogate.svg", tag + " surrogate", res.grid.nw,
                        res.grid.nb, res.surrogate_values);
  io::write_heatmap_svg(ctx.out_dir / "relerr.svg", tag + " relative error", res.grid.nw,
                        res.grid.nb, res.relerr.values, true);
  {
    std::ofstream out(ctx.out_dir / "surrogate.json", std::ios::binary);
    out << io::surrogate_to_json(res.surrogate).dump(2) << '\n';
  }
  for (const char* f : {"loss_true.csv", "loss_surrogate.csv", "relerr.csv", "nodes.csv",
                        "loss_true.svg", "loss_surrogate.svg", "relerr.svg", "surrogate.json"}) {
    manifest.add_file(f);
  }
  manifest.metadata("grid_rows", res.grid.size());
  manifest.metadata("node_count", res.nodes.size());
  manifest.metadata("jitter", res.surrogate.jitter());
  manifest.metadata("kernel_condition", res.surrogate.condition());
  manifest.metadata("relerr_min", res.relerr.min);
  manifest.metadata("relerr_max", res.relerr.max);
  manifest.metadata("node_residual_max", res.node_residual_max);
  manifest.assumption("node_placement", ctx.cfg.has(tag + ".node_list") ? "listed" : "stratified");
}

}  // namespace detail

/// True loss on the lattice plus the surrogate fit; no files.
inline SurfaceResult compute_micro_surface(const Context& ctx, const MicroSetup& setup) {
  const auto start = detail::Clock::now();
  SurfaceResult res;
  res.grid = setup.params;
  res.truth.resize(res.grid.size());
  parallel_for(res.grid.size(), ctx.threads,
               [&](std::size_t k) { res.truth[k] = micro_loss(setup, res.grid.point(k)); });
  detail::fit_surface(res, ctx, "micro", setup.nodes, setup.gamma, Stream::micro_nodes,
                      [&](const ParamPoint& p) { return micro_loss(setup, p); });
  res.seconds = detail::seconds_since(start);
  return res;
}

struct MicroSurfaceResult {
  MicroSetup setup;
  SurfaceResult surface;
};

inline MicroSurfaceResult run_micro_surface(const Context& ctx) {
  const auto start = detail::Clock::now();
  detail::prepare(ctx);
  MicroSurfaceResult res{micro_setup(ctx), {}};
  res.surface = compute_micro_surface(ctx, res.setup);
  io::RunManifest manifest("micro-surface", ctx.out_dir, ctx.seed);
  detail::write_surface(ctx, manifest, res.surface, "micro");
  manifest.metadata("target_y", res.setup.y);
  manifest.assumption("target", "ensemble mean at the grid center");
  manifest.assumption("seed_reuse", "micro-surface and micro-descent share the master seed");
  manifest.set_wall_clock(detail::seconds_since(start));
  manifest.write(ctx.cfg);
  return res;
}

struct DescentResult {
  DescentTrace trace;
  ParamPoint start;
  ParamPoint grid_minimizer;
  double grid_min = 0.0;
  double neighborhood_range = 0.0;  ///< objective range within 2 cells of the grid minimizer
  detail::MonotoneCheck monotone;
  double seconds = 0.0;
};

namespace detail {

inline DescentResult descend(const Context& ctx, const std::string& section,
                             const SurfaceResult& surface) {
  DescentResult res;
  const std::size_t best = argmin(surface.surrogate_values);
  res.grid_minimizer = surface.grid.point(best);
  res.grid_min = surface.surrogate_values[best];
  res.neighborhood_range = neighborhood_range(surface.grid, surface.surrogate_values, best, 2);
  const std::string start = ctx.cfg.get(section + ".start", "auto");
  if (start == "auto") {
    res.start = farthest_corner(surface.grid.box, res.grid_minimizer);
  } else {
    const auto v = parse_list<double>(start);
    if (v.size() != 2) throw ConfigurationError(section + ".start must be auto or w,b");
    res.start = {v[0], v[1]};
  }
  res.trace = pgd(surface.surrogate, res.start, surface.grid.box, read_descent(ctx.cfg, section));
  res.monotone = check_monotone(surface.surrogate, res.trace, 10);
  return res;
}

inline void write_descent_common(const Context& ctx, io::RunManifest& manifest,
                                 const DescentResult& d, const std::string& title) {
  write_trace_csv(ctx.out_dir / "trace.csv", d.trace);
  io::write_line_svg(ctx.out_dir / "trace.svg", title, "iteration", "surrogate loss",
                     {trace_series(d.trace, "objective")});
  manifest.add_file("trace.csv");
  manifest.add_file("trace.svg");
  manifest.metadata("start", {d.start.w, d.start.b});
  manifest.metadata("final", {d.trace.last().point.w, d.trace.last().point.b});
  manifest.metadata("iterations", d.trace.iterates.size() - 1);
  manifest.metadata("stop_reason", std::string(to_string(d.trace.stop_reason)));
  manifest.metadata("step", d.trace.step_size);
  manifest.metadata("max_iters", d.trace.options.max_iters);
  manifest.metadata("grad_tol", d.trace.options.grad_tol);
  manifest.metadata("step_tol", d.trace.options.step_tol);
  manifest.metadata("monotone_violations_after_10", d.monotone.violations);
  manifest.assumption("start", ctx.cfg.has("descent.start") ? "configured"
                                                            : "box corner farthest from grid minimizer");
}

}  // namespace detail

struct MicroDescentResult {
  MicroSetup setup;
  SurfaceResult surface;
  DescentResult descent;
  double final_mean = 0.0;
  double relative_mean_error = 0.0;  ///< |mean x(T) - y| / |y| at the final iterate
};

inline MicroDescentResult run_micro_descent(const Context& ctx) {
  const auto start = detail::Clock::now();
  detail::prepare(ctx);
  MicroDescentResult res{micro_setup(ctx), {}, {}};
  res.surface = compute_micro_surface(ctx, res.setup);
  res.descent = detail::descend(ctx, "descent", res.surface);
  const ParamPoint fin = res.descent.trace.last().point;
  res.final_mean = micro_final_mean(res.setup, fin, ctx.threads);
  res.relative_mean_error = std::abs(res.final_mean - res.setup.y) / std::abs(res.setup.y);

  io::RunManifest manifest("micro-descent", ctx.out_dir, ctx.seed);
  detail::write_descent_common(ctx, manifest, res.descent, "Projected gradient descent");
  {
    const ParamPoint pts[] = {res.descent.start, fin, res.setup.params.center()};
    std::vector<std::vector<double>> means(3);
    for (int c = 0; c < 3; ++c) {
      const auto ctrl = ControlSchedule::constant(pts[c].w, pts[c].b, res.setup.grid);
      means[c].assign(res.setup.grid.size(), 0.0);
      for (const auto& x0 : res.setup.data.states()) {
        const Trajectory tr = integrate_ode(x0, ctrl, res.setup.act);
        for (std::size_t k = 0; k < tr.states.size(); ++k) means[c][k] += tr.states[k](0);
      }
      for (double& m : means[c]) m /= static_cast<double>(res.setup.data.size());
    }
    io::CsvWriter csv(ctx.out_dir / "mean_trajectories.csv",
                      {"t", "mean_initial", "mean_final", "mean_center"});
    std::vector<double> t(res.setup.grid.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      t[k] = res.setup.grid.time(k);
      csv.row({t[k], means[0][k], means[1][k], means[2][k]});
    }
    io::write_line_svg(ctx.out_dir / "mean_trajectories.svg", "Ensemble mean", "t", "mean x(t)",
                       {{"initial", t, means[0]}, {"final", t, means[1]}, {"center", t, means[2]}});
    manifest.add_file("mean_trajectories.csv");
    manifest.add_file("mean_trajectories.svg");
  }
  manifest.metadata("target_y", res.setup.y);
  manifest.metadata("final_mean", res.final_mean);
  manifest.metadata("relative_mean_error", res.relative_mean_error);
  manifest.metadata("jitter", res.surface.surrogate.jitter());
  res.descent.seconds = detail::seconds_since(start);
  manifest.set_wall_clock(res.descent.seconds);
  manifest.write(ctx.cfg);
  return res;
}

// ---------------------------------------------------------------- mean-field

struct MeanFieldSetup {
  Density1D rho0;
  TimeGrid grid;
  Activation act = Activation::relu;
  LossKind loss = LossKind::abs;
  ParamGrid params;
  Density1D target;  ///< FV solution at the grid center
  std::size_t samples = 100;
  std::size_t repeats = 100;
  double gamma = 1e-2;
  std::size_t nodes = 20;
  SpreadConvention convention = SpreadConvention::variance;
};

inline Density1D mf_solve(const MeanFieldSetup& s, const ParamPoint& p) {
  return solve_meanfield(s.rho0, ControlSchedule::constant(p.w, p.b, s.grid), s.act);
}

/// Loss estimate with common random numbers: every parameter point uses the
/// same sampling streams.
inline MonteCarloEstimate mf_loss(const MeanFieldSetup& s, const ParamPoint& p, std::uint64_t seed) {
  return loss_meanfield(mf_solve(s, p), s.target, s.loss, s.samples, s.repeats, seed);
}

inline MeanFieldSetup mf_setup(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const std::string conv = cfg.get("meanfield.spread_convention", "variance");
  if (conv != "variance" && conv != "std") {
    throw ConfigurationError("meanfield.spread_convention must be variance or std");
  }
  const auto convention = conv == "std" ? SpreadConvention::std_dev : SpreadConvention::variance;
  const double xmin = cfg.get("meanfield.x_min", 0.0);
  const double xmax = cfg.get("meanfield.x_max", 3.0);
  const double dx = cfg.get("meanfield.dx", 0.1);
  const Density1D rho0 = Density1D::gaussian(xmin, xmax, dx, cfg.get("meanfield.mean", 1.5),
                                             cfg.get("meanfield.spread", 0.1), convention);
  const TimeGrid grid(cfg.get("meanfield.t0", 0.0), cfg.get("meanfield.T", 1.0),
                      cfg.get("meanfield.dt", 0.01));
  const ParamGrid params =
      make_param_grid(detail::read_box(cfg, "meanfield"), cfg.get("meanfield.grid_step", 0.02));
  MeanFieldSetup s{rho0, grid, parse_activation(cfg.get("meanfield.activation", "relu")),
                   parse_loss_kind(cfg.get("meanfield.loss", "abs")), params, rho0};
  s.target = mf_solve(s, params.center());
  s.samples = cfg.get<std::size_t>("meanfield.samples", 100);
  s.repeats = cfg.get<std::size_t>("meanfield.repeats", 100);
  s.gamma = cfg.get("meanfield.gamma", 1e-2);
  s.nodes = cfg.get<std::size_t>("meanfield.nodes", 20);
  s.convention = convention;
  return s;
}

inline SurfaceResult compute_mf_surface(const Context& ctx, const MeanFieldSetup& setup) {
  const auto start = detail::Clock::now();
  SurfaceResult res;
  res.grid = setup.params;
  res.truth.resize(res.grid.size());
  res.truth_stderr.resize(res.grid.size());
  const std::uint64_t loss_seed = derive_seed(ctx.seed, Stream::mf_loss);
  parallel_for(res.grid.size(), ctx.threads, [&](std::size_t k) {
    const auto est = mf_loss(setup, res.grid.point(k), loss_seed);
    res.truth[k] = est.mean;
    res.truth_stderr[k] = est.std_error;
  });
  detail::fit_surface(res, ctx, "meanfield", setup.nodes, setup.gamma, Stream::mf_nodes,
                      [&](const ParamPoint& p) { return mf_loss(setup, p, loss_seed).mean; });
  res.seconds = detail::seconds_since(start);
  return res;
}

namespace detail {

inline void mf_assumptions(io::RunManifest& manifest, const MeanFieldSetup& s) {
  manifest.assumption("gaussian_spread_convention",
                      s.convention == SpreadConvention::variance ? "variance" : "std");
  manifest.assumption("target_measure", "FV density at the grid center");
  manifest.assumption("boundary", "zero inflow, free outflow");
  manifest.assumption("loss_sampling", "common random numbers across grid points");
  manifest.assumption("seed_reuse", "mf-surface and mf-descent share the master seed");
}

}  // namespace detail

struct MfSurfaceResult {
  MeanFieldSetup setup;
  SurfaceResult surface;
};

inline MfSurfaceResult run_mf_surface(const Context& ctx) {
  const auto start = detail::Clock::now();
  detail::prepare(ctx);
  MfSurfaceResult res{mf_setup(ctx), {}};
  res.surface = compute_mf_surface(ctx, res.setup);
  io::RunManifest manifest("mf-surface", ctx.out_dir, ctx.seed);
  detail::write_surface(ctx, manifest, res.surface, "meanfield");
  detail::write_field_csv(ctx.out_dir / "loss_stderr.csv", "stderr", res.surface.grid,
                          res.surface.truth_stderr);
  manifest.add_file("loss_stderr.csv");
  detail::mf_assumptions(manifest, res.setup);
  manifest.set_wall_clock(detail::seconds_since(start));
  manifest.write(ctx.cfg);
  return res;
}

struct MfDescentResult {
  MeanFieldSetup setup;
  SurfaceResult surface;
  DescentResult descent;
  Density1D optimized{0.0, 1.0, 1.0, {0.0}};
  double w1_to_target = 0.0;   ///< exact W1 between optimized and target densities
  double loss_stderr = 0.0;    ///< Monte-Carlo standard error of the loss at the final iterate
  double w1_tolerance = 0.0;   ///< 2 dx + 3 stderr
};

inline MfDescentResult run_mf_descent(const Context& ctx) {
  const auto start = detail::Clock::now();
  detail::prepare(ctx);
  MfDescentResult res{mf_setup(ctx), {}, {}};
  res.surface = compute_mf_surface(ctx, res.setup);
  res.descent = detail::descend(ctx, "mf_descent", res.surface);
  const ParamPoint fin = res.descent.trace.last().point;
  res.optimized = mf_solve(res.setup, fin);
  res.w1_to_target = wasserstein1(res.optimized, res.setup.target);
  res.loss_stderr = mf_loss(res.setup, fin, derive_seed(ctx.seed, Stream::mf_loss)).std_error;
  res.w1_tolerance = 2.0 * res.setup.rho0.dx() + 3.0 * res.loss_stderr;

  io::RunManifest manifest("mf-descent", ctx.out_dir, ctx.seed);
  detail::write_descent_common(ctx, manifest, res.descent, "Mean-field descent");
  {
    io::CsvWriter csv(ctx.out_dir / "densities.csv", {"x", "initial", "target", "optimized"});
    std::vector<double> x, a, b, c;
    for (std::size_t j = 0; j < res.setup.rho0.size(); ++j) {
      x.push_back(res.setup.rho0.center(j));
      a.push_back(res.setup.rho0.cells()[j]);
      b.push_back(res.setup.target.cells()[j]);
      c.push_back(res.optimized.cells()[j]);
      csv.row({x.back(), a.back(), b.back(), c.back()});
    }
    io::write_line_svg(ctx.out_dir / "densities.svg", "Densities at T", "x", "density",
                       {{"initial", x, a}, {"target", x, b}, {"optimized", x, c}});
    manifest.add_file("densities.csv");
    manifest.add_file("densities.svg");
  }
  detail::mf_assumptions(manifest, res.setup);
  manifest.metadata("w1_to_target", res.w1_to_target);
  manifest.metadata("w1_tolerance", res.w1_tolerance);
  manifest.metadata("jitter", res.surface.surrogate.jitter());
  res.descent.seconds = detail::seconds_since(start);
  manifest.set_wall_clock(res.descent.seconds);
  manifest.write(ctx.cfg);
  return res;
}

// ---------------------------------------------------------------- HUM

struct HumResult {
  HumSolution solution;
  double terminal_error = 0.0;  ///< |x(T) - y|
  double duality_gap = 0.0;     ///< relative, at the coarser gap grid
  double bias_min = 0.0;
  double bias_max = 0.0;
};

inline HumResult run_hum(const Context& ctx) {
  const auto start = detail::Clock::now();
  detail::prepare(ctx);
  const auto& cfg = ctx.cfg;
  const auto M = cfg.get<std::size_t>("hum.particles", 1);
  const auto d = cfg.get<std::size_t>("hum.dim", 1);
  const double w = cfg.get("hum.w", 0.0);
  auto stacked = [&](const std::string& key, double fallback) {
    auto v = parse_list<double>(cfg.get(key, io::format_double(fallback)));
    if (v.size() == 1) v.assign(M * d, v[0]);
    if (v.size() != M * d) throw ConfigurationError(key + " needs 1 or M*d entries");
    return Vector(Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  const Vector x0 = stacked("hum.x0", 0.0);
  const Vector y = stacked("hum.y", 1.0);
  const double t0 = cfg.get("hum.t0", 0.0);
  const double T = cfg.get("hum.T", 1.0);
  const Matrix W = w * Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  const Vector zero_b = Vector::Zero(static_cast<Eigen::Index>(d));
  const TimeGrid grid(t0, T, cfg.get("hum.dt", 1e-4));
  const auto sched = ControlSchedule::constant(W, zero_b, grid);

  HumResult res;
  res.solution = hum_solve_terminal(sched, x0, y, ctx.threads);
  const auto states = integrate_bias_controlled(x0, sched, res.solution.bias);
  res.terminal_error = (states.back() - y).norm();
  res.bias_min = std::numeric_limits<double>::infinity();
  res.bias_max = -std::numeric_limits<double>::infinity();
  for (const auto& b : res.solution.bias) {
    res.bias_min = std::min(res.bias_min, b.minCoeff());
    res.bias_max = std::max(res.bias_max, b.maxCoeff());
  }
  {
    const TimeGrid coarse(t0, T, cfg.get("hum.gap_dt", 1e-3));
    const auto cs = ControlSchedule::constant(W, zero_b, coarse);
    const auto bias = hum_bias(adjoint_solve(cs, res.solution.lambda_T));
    const auto pair = duality_pairing(cs, bias, res.solution.lambda_T);
    const double scale = pair.state_norm * pair.costate_norm;
    res.duality_gap = scale > 0.0 ? pair.gap() / scale : pair.gap();
  }

  const AdjointState adj = adjoint_solve(sched, res.solution.lambda_T);
  std::vector<std::string> header{"t"};
  const auto n = static_cast<std::size_t>(x0.size());
  for (std::size_t i = 0; i < n; ++i) header.push_back("x" + std::to_string(i));
  for (std::size_t i = 0; i < n; ++i) header.push_back("lambda" + std::to_string(i));
  for (std::size_t i = 0; i < d; ++i) header.push_back("b" + std::to_string(i));
  {
    io::CsvWriter csv(ctx.out_dir / "hum.csv", header);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      std::vector<double> row{grid.time(k)};
      for (std::size_t i = 0; i < n; ++i) row.push_back(states[k](static_cast<Eigen::Index>(i)));
      for (std::size_t i = 0; i < n; ++i) row.push_back(adj.costates[k](static_cast<Eigen::Index>(i)));
      for (std::size_t i = 0; i < d; ++i) row.push_back(res.solution.bias[k](static_cast<Eigen::Index>(i)));
      csv.row(row);
    }
  }
  io::RunManifest manifest("hum", ctx.out_dir, ctx.seed);
  manifest.add_file("hum.csv");
  manifest.metadata("terminal_error", res.terminal_error);
  manifest.metadata("relative_duality_gap", res.duality_gap);
  manifest.metadata("gramian_condition", res.solution.condition);
  manifest.set_wall_clock(detail::seconds_since(start));
  manifest.write(cfg);
  return res;
}

// ---------------------------------------------------------------- static control

struct StaticControlRow {
  double dt = 0.0;
  double b = 0.0;
  double phi_T = 0.0;
  double error = 0.0;
  double order = std::numeric_limits<double>::quiet_NaN();  ///< log2-type rate vs previous row
};

struct StaticControlStudy {
  double w = 0.0;
  std::vector<StaticControlRow> rows;
  double extended_error = 0.0;  ///< |x1(T) - y| of the extended flow at the finest dt
};

/// Euler terminal error of the static control for constant w over a dt ladder.
inline StaticControlStudy static_control_study(double w, double x0, double y, double t0,
                                               double T, const std::vector<double>& dts) {
  StaticControlStudy s;
  s.w = w;
  for (double dt : dts) {
    const TimeGrid grid(t0, T, dt);
    const auto sched = ControlSchedule::constant(w, 0.0, grid);
    StaticControlRow row;
    row.dt = dt;
    row.b = static_control(x0, y, sched).b;
    const auto traj = integrate_ode(Vector::Constant(1, x0),
                                    ControlSchedule::constant(w, row.b, grid), Activation::identity);
    row.phi_T = traj.terminal()(0);
    row.error = std::abs(row.phi_T - y);
    if (!s.rows.empty()) {
      const auto& prev = s.rows.back();
      row.order = std::log(prev.error / row.error) / std::log(prev.dt / row.dt);
    }
    s.rows.push_back(row);
  }
  const TimeGrid fine(t0, T, dts.back());
  const auto sched = ControlSchedule::constant(w, 0.0, fine);
  const auto ext = integrate_extended(Vector::Constant(1, x0), Vector::Constant(1, y), sched,
                                      [&](double, const Vector& x2, const Vector& x3) {
                                        return Vector::Constant(1, static_control(x2(0), x3(0), sched).b);
                                      });
  s.extended_error = std::abs(ext.back().x1(0) - y);
  return s;
}

inline std::vector<StaticControlStudy> run_static_control(const Context& ctx) {
  const auto start = detail::Clock::now();
  detail::prepare(ctx);
  const auto& cfg = ctx.cfg;
  const auto ws = parse_list<double>(cfg.get("static.w", "-3,0,0.5"));
  const auto dts = parse_list<double>(cfg.get("static.dt_list", "0.01,0.005,0.0025"));
  if (ws.empty() || dts.empty()) throw ConfigurationError("static: w and dt_list must be non-empty");
  const double x0 = cfg.get("static.x0", 2.0);
  const double y = cfg.get("static.y", 0.0);
  const double t0 = cfg.get("static.t0", 0.0);
  const double T = cfg.get("static.T", 1.0);
  std::vector<StaticControlStudy> out;
  io::CsvWriter csv(ctx.out_dir / "static_control.csv",
                    {"w", "dt", "b", "phi_T", "abs_error", "order"});
  for (double w : ws) {
    out.push_back(static_control_study(w, x0, y, t0, T, dts));
    for (const auto& r : out.back().rows) csv.row({w, r.dt, r.b, r.phi_T, r.error, r.order});
  }
  io::RunManifest manifest("static-control", ctx.out_dir, ctx.seed);
  manifest.add_file("static_control.csv");
  for (const auto& s : out) {
    manifest.metadata("extended_error_w" + io::format_double(s.w), s.extended_error);
  }
  manifest.set_wall_clock(detail::seconds_since(start));
  manifest.write(cfg);
  return out;
}

// ---------------------------------------------------------------- consistency

struct ConsistencyRow {
  std::size_t n = 0;
  std::vector<double> w1;  ///< one entry per replica
  double mean = 0.0;
  double std_error = 0.0;
};

struct ConsistencyResult {
  std::vector<ConsistencyRow> rows;
  double dx = 0.0;
  double seconds = 0.0;
};

inline ConsistencyResult run_consistency(const Context& ctx) {
  const auto start = detail::Clock::now();
  detail::prepare(ctx);
  const auto& cfg = ctx.cfg;
  const MeanFieldSetup setup = mf_setup(ctx);
  const ParamPoint p = cfg.has("consistency.w") || cfg.has("consistency.b")
                           ? ParamPoint{cfg.get("consistency.w", 0.0), cfg.get("consistency.b", 0.0)}
                           : setup.params.center();
  const auto ctrl = ControlSchedule::constant(p.w, p.b, setup.grid);
  const Density1D fv = solve_meanfield(setup.rho0, ctrl, setup.act);
  const auto sizes = parse_list<std::size_t>(cfg.get("consistency.sizes", "100,1000,10000"));
  const auto R = cfg.get<std::size_t>("consistency.replicas", 10);
  if (sizes.empty() || R == 0) throw ConfigurationError("consistency: need sizes and replicas >= 1");

  ConsistencyResult res;
  res.dx = setup.rho0.dx();
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    ConsistencyRow row;
    row.n = sizes[s];
    row.w1.resize(R);
    for (std::size_t r = 0; r < R; ++r) {
      Rng rng = make_rng(ctx.seed, Stream::consistency, s * R + r);
      const SampleSet pf = push_forward_particles(row.n, setup.rho0, ctrl, setup.act, rng, ctx.threads);
      row.w1[r] = wasserstein1(pf, fv);
    }
    row.mean = std::accumulate(row.w1.begin(), row.w1.end(), 0.0) / static_cast<double>(R);
    if (R > 1) {
      double var = 0.0;
      for (double v : row.w1) var += (v - row.mean) * (v - row.mean);
      row.std_error = std::sqrt(var / static_cast<double>(R - 1) / static_cast<double>(R));
    }
    res.rows.push_back(std::move(row));
  }

  io::RunManifest manifest("consistency", ctx.out_dir, ctx.seed);
  {
    io::CsvWriter csv(ctx.out_dir / "w1_vs_n.csv", {"n", "mean_w1", "stderr", "replicas"});
    io::CsvWriter rep(ctx.out_dir / "w1_replicas.csv", {"n", "replica", "w1"});
    io::Series series{"mean W1", {}, {}};
    for (const auto& row : res.rows) {
      csv.row({static_cast<double>(row.n), row.mean, row.std_error, static_cast<double>(R)});
      for (std::size_t r = 0; r < R; ++r) {
        rep.row({static_cast<double>(row.n), static_cast<double>(r), row.w1[r]});
      }
      series.x.push_back(std::log10(static_cast<double>(row.n)));
      series.y.push_back(row.mean);
    }
    io::write_line_svg(ctx.out_dir / "w1_vs_n.svg", "Particles vs finite volume", "log10 n",
                       "W1", {series});
  }
  for (const char* f : {"w1_vs_n.csv", "w1_replicas.csv", "w1_vs_n.svg"}) manifest.add_file(f);
  manifest.metadata("w", p.w);
  manifest.metadata("b", p.b);
  detail::mf_assumptions(manifest, setup);
  res.seconds = detail::seconds_since(start);
  manifest.set_wall_clock(res.seconds);
  manifest.write(cfg);
  return res;
}

}  // namespace resflow::experiments
