// Command-line front end for the resflow experiments.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "resflow/experiments.hpp"

namespace ex = resflow::experiments;

namespace {

void report_surface(const ex::SurfaceResult& s) {
  std::printf("grid rows       %zu (%zu x %zu)\n", s.grid.size(), s.grid.nw, s.grid.nb);
  std::printf("nodes           %zu, jitter %.3g, kernel condition %.3g\n", s.nodes.size(),
              s.surrogate.jitter(), s.surrogate.condition());
  std::printf("node residual   %.3g\n", s.node_residual_max);
  std::printf("relative error  [%.3g, %.3g]\n", s.relerr.min, s.relerr.max);
}

void report_descent(const ex::DescentResult& d) {
  const auto& last = d.trace.last();
  std::printf("start           (%.6g, %.6g)\n", d.start.w, d.start.b);
  std::printf("final           (%.6g, %.6g) objective %.6g after %zu iterations (%s)\n",
              last.point.w, last.point.b, last.objective, d.trace.iterates.size() - 1,
              std::string(resflow::to_string(d.trace.stop_reason)).c_str());
  std::printf("grid minimum    %.6g at (%.6g, %.6g)\n", d.grid_min, d.grid_minimizer.w,
              d.grid_minimizer.b);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"resflow: neural ODE, mean-field and kernel surrogate experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = ex::kDefaultSeed;
  std::string out_dir = "out";
  std::size_t threads = 1;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--set", overrides, "override a config key, section.key=value");

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"decay", "static-control decay curves"},
      {"micro-surface", "microscopic loss field and kernel surrogate"},
      {"micro-descent", "projected gradient descent on the microscopic surrogate"},
      {"mf-surface", "mean-field loss field and kernel surrogate"},
      {"mf-descent", "projected gradient descent on the mean-field surrogate"},
      {"hum", "HUM terminal control of the linear system"},
      {"static-control", "static control convergence study"},
      {"consistency", "particle push-forward against the finite-volume solution"},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help);

  CLI11_PARSE(app, argc, argv);

  try {
    ex::Context ctx;
    if (!config_path.empty()) ctx.cfg = resflow::io::Config::from_file(config_path);
    for (const auto& o : overrides) ctx.cfg.set_override(o);
    ctx.seed = seed_opt->count() ? seed : ctx.cfg.get<std::uint64_t>("run.seed", ex::kDefaultSeed);
    ctx.out_dir = out_dir;
    ctx.threads = threads;

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "decay") {
      const auto r = ex::run_decay(ctx);
      for (const auto& c : r.curves) {
        std::printf("curve %s  b = %.9g  |Phi(T) - y| = %.3g  crosses %.2g at t = %.4g\n",
                    c.label.c_str(), c.b, c.terminal_error, r.threshold, c.crossing);
      }
    } else if (cmd == "micro-surface") {
      const auto r = ex::run_micro_surface(ctx);
      std::printf("target y        %.9g\n", r.setup.y);
      report_surface(r.surface);
    } else if (cmd == "micro-descent") {
      const auto r = ex::run_micro_descent(ctx);
      report_descent(r.descent);
      std::printf("final mean      %.9g vs target %.9g (relative %.3g)\n", r.final_mean,
                  r.setup.y, r.relative_mean_error);
    } else if (cmd == "mf-surface") {
      report_surface(ex::run_mf_surface(ctx).surface);
    } else if (cmd == "mf-descent") {
      const auto r = ex::run_mf_descent(ctx);
      report_descent(r.descent);
      std::printf("W1 to target    %.4g (tolerance %.4g)\n", r.w1_to_target, r.w1_tolerance);
    } else if (cmd == "hum") {
      const auto r = ex::run_hum(ctx);
      std::printf("lambda_T norm   %.9g\n", r.solution.lambda_T.norm());
      std::printf("bias range      [%.9g, %.9g]\n", r.bias_min, r.bias_max);
      std::printf("terminal error  %.3g\n", r.terminal_error);
      std::printf("duality gap     %.3g (relative)\n", r.duality_gap);
    } else if (cmd == "static-control") {
      for (const auto& s : ex::run_static_control(ctx)) {
        for (const auto& row : s.rows) {
          std::printf("w = %-5g dt = %-8g b = %-14.9g |Phi(T) - y| = %-10.3g order %.3g\n", s.w,
                      row.dt, row.b, row.error, row.order);
        }
      }
    } else if (cmd == "consistency") {
      const auto r = ex::run_consistency(ctx);
      for (const auto& row : r.rows) {
        std::printf("n = %-6zu W1 = %.4g +- %.2g\n", row.n, row.mean, row.std_error);
      }
    }
    std::printf("wrote %s\n", (ctx.out_dir / "manifest.json").string().c_str());
  } catch (const resflow::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
