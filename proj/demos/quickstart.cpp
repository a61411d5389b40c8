// Steers x0 = 2 to y = 0 with a static bias, then fits a kernel surrogate to
// a one-dimensional toy loss and descends on it.

#include <cstdio>
#include <vector>

#include "resflow/controllability.hpp"
#include "resflow/dynamics.hpp"
#include "resflow/optimize.hpp"
#include "resflow/surrogate.hpp"

int main() {
  using namespace resflow;

  const TimeGrid grid(0.0, 1.0, 1e-3);
  const auto weights = ControlSchedule::constant(-3.0, 0.0, grid);
  const double b = static_control(2.0, 0.0, weights).b;
  const Trajectory traj = integrate_ode(Vector::Constant(1, 2.0),
                                        ControlSchedule::constant(-3.0, b, grid),
                                        Activation::identity);
  std::printf("static bias %.6f, Phi(1) = %.2e\n", b, traj.terminal()(0));

  std::vector<ParamPoint> nodes;
  std::vector<double> values;
  for (double w = 0.0; w <= 0.25; w += 0.05) {
    nodes.push_back({w, 0.0});
    values.push_back((w - 0.12) * (w - 0.12));
  }
  const KernelSurrogate s = fit_interpolation(nodes, values, 1e-2);
  const BoxDomain box{0.0, 0.25, 0.0, 2.5e-3};
  DescentOptions opts;
  opts.step = 1e-2;
  opts.max_iters = 5000;
  const DescentTrace trace = pgd(s, {0.25, 0.0}, box, opts);
  std::printf("surrogate minimum near w = %.4f after %zu steps\n", trace.last().point.w,
              trace.iterates.size() - 1);
}
