#include <gtest/gtest.h>

#include <cmath>

#include "resflow/controllability.hpp"
#include "resflow/random.hpp"

using namespace resflow;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

Vector random_vector(Rng& rng, Eigen::Index n, double lo = -1, double hi = 1) {
  return Vector::NullaryExpr(n, [&] { return uniform(rng, lo, hi); });
}

Matrix random_matrix(Rng& rng, Eigen::Index d) {
  return Matrix::NullaryExpr(d, d, [&] { return uniform(rng, -1, 1); });
}

ControlSchedule weights(const Matrix& w, double T, double dt) {
  return ControlSchedule::constant(w, Vector::Zero(w.rows()), TimeGrid(0, T, dt));
}

BiasTrajectory constant_bias(const TimeGrid& g, const Vector& b) {
  return BiasTrajectory(g.size(), b);
}

}  // namespace

TEST(Adjoint, ZeroGenerator) {
  const auto s = weights(Matrix::Zero(1, 1), 1, 0.1);
  const Vector lT = (Vector(2) << 1.5, -2.0).finished();
  const AdjointState a = adjoint_solve(s, lT);
  EXPECT_EQ(a.particles, 2u);
  for (const auto& c : a.costates) EXPECT_EQ(c, lT);
}

TEST(Adjoint, ScalarClosedForm) {
  const double w = 0.7, T = 1.0;
  double prev = 0.0;
  for (double dt : {1e-2, 5e-3, 2.5e-3}) {
    const auto s = weights(Matrix::Constant(1, 1, w), T, dt);
    const AdjointState a = adjoint_solve(s, v1(1.0));
    EXPECT_EQ(a.costates.back()(0), 1.0);
    const double err = std::abs(a.costates.front()(0) - std::exp(w * T));
    EXPECT_LE(err, 2.0 * dt);
    if (prev > 0.0) EXPECT_GE(std::log2(prev / err), 0.9);
    prev = err;
  }
}

TEST(Adjoint, ZeroTerminal) {
  const auto s = weights(Matrix::Constant(2, 2, 0.3), 1, 0.1);
  for (const auto& c : adjoint_solve(s, Vector::Zero(4)).costates) EXPECT_EQ(c, Vector::Zero(4));
}

TEST(Adjoint, RejectsBadLength) {
  EXPECT_THROW(adjoint_solve(weights(Matrix::Zero(2, 2), 1, 0.1), Vector::Zero(3)),
               ConfigurationError);
}

TEST(HumBias, Examples) {
  const auto s = weights(Matrix::Constant(1, 1, -0.4), 1, 0.1);
  const AdjointState one = adjoint_solve(s, v1(2.0));
  const BiasTrajectory b1 = hum_bias(one);
  for (std::size_t k = 0; k < b1.size(); ++k) EXPECT_EQ(b1[k], one.costates[k]);

  const BiasTrajectory cancel = hum_bias(adjoint_solve(s, (Vector(2) << 1.0, -1.0).finished()));
  for (const auto& b : cancel) EXPECT_EQ(b(0), 0.0);

  const BiasTrajectory three =
      hum_bias(adjoint_solve(weights(Matrix::Zero(1, 1), 1, 0.1), (Vector(2) << 1.0, 2.0).finished()));
  for (const auto& b : three) EXPECT_EQ(b(0), 3.0);
}

TEST(Duality, ZeroCostateGivesZeroGap) {
  const auto s = weights(Matrix::Constant(1, 1, 0.2), 1, 0.01);
  EXPECT_EQ(duality_gap(s, constant_bias(s.grid(), v1(0.7)), v1(0.0)), 0.0);
}

TEST(Duality, ConstantCostateHandComputation) {
  const double c = 1.7, T = 2.0;
  const auto s = weights(Matrix::Zero(1, 1), T, 0.01);
  const auto bias = hum_bias(adjoint_solve(s, v1(c)));
  const DualityPairing p = duality_pairing(s, bias, v1(c));
  EXPECT_NEAR(p.terminal, c * c * T, 1e-10 * c * c * T);
  EXPECT_NEAR(p.control, c * c * T, 1e-10 * c * c * T);
  EXPECT_LE(p.gap(), 1e-10 * c * c * T);
}

TEST(Duality, TwoParticlesHumBias) {
  Rng rng = make_rng(11, Stream::test);
  const auto s = weights(Matrix::Constant(1, 1, 0.1), 1, 1e-3);
  for (int rep = 0; rep < 5; ++rep) {
    const Vector lT = random_vector(rng, 2);
    const auto bias = hum_bias(adjoint_solve(s, lT));
    const DualityPairing p = duality_pairing(s, bias, lT);
    EXPECT_LE(p.gap(), 1e-4 * std::abs(p.terminal));
  }
}

TEST(Duality, FirstOrderForGenericBias) {
  Rng rng = make_rng(12, Stream::test);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::Index d = 2;
    const Matrix w = random_matrix(rng, d);
    const Vector lT = random_vector(rng, 3 * d);
    const Vector u = random_vector(rng, d);
    double prev = 0.0;
    for (double dt : {2e-3, 1e-3, 5e-4}) {
      const auto s = weights(w, 1, dt);
      BiasTrajectory bias(s.grid().size());
      for (std::size_t k = 0; k < bias.size(); ++k) bias[k] = u * std::cos(3.0 * s.grid().time(k));
      const double gap = duality_gap(s, bias, lT);
      if (prev > 0.0) EXPECT_GE(std::log2(prev / gap), 0.9);
      prev = gap;
    }
  }
}

TEST(Duality, DiscreteTransposeSymmetry) {
  // Homogeneous flow: lambda(t0) . x0 equals x(T) . lambda_T.
  Rng rng = make_rng(13, Stream::test);
  const Matrix w = random_matrix(rng, 3);
  const auto s = weights(w, 1, 1e-2);
  const Vector x0 = random_vector(rng, 6);
  const Vector lT = random_vector(rng, 6);
  const auto xs = integrate_bias_controlled(x0, s, constant_bias(s.grid(), Vector::Zero(3)));
  const AdjointState a = adjoint_solve(s, lT);
  EXPECT_NEAR(a.costates.front().dot(x0), xs.back().dot(lT), 1e-12);
}

TEST(Hum, AlreadyReachable) {
  const auto s = weights(Matrix::Constant(1, 1, -0.5), 1, 1e-3);
  const auto free_end =
      integrate_bias_controlled(v1(1.3), s, constant_bias(s.grid(), v1(0.0))).back();
  const HumSolution sol = hum_solve_terminal(s, v1(1.3), free_end);
  EXPECT_NEAR(sol.lambda_T(0), 0.0, 1e-14);
  for (const auto& b : sol.bias) EXPECT_NEAR(b(0), 0.0, 1e-14);
}

TEST(Hum, UnitGramian) {
  const auto s = weights(Matrix::Zero(1, 1), 1, 1e-3);
  const HumSolution sol = hum_solve_terminal(s, v1(0.0), v1(1.0));
  EXPECT_NEAR(sol.gramian(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(sol.lambda_T(0), 1.0, 1e-12);
  for (const auto& b : sol.bias) EXPECT_NEAR(b(0), 1.0, 1e-12);
  const auto xs = integrate_bias_controlled(v1(0.0), s, sol.bias);
  EXPECT_NEAR(xs.back()(0), 1.0, 1e-12);
}

TEST(Hum, SharedBiasCannotSplitParticles) {
  const auto s = weights(Matrix::Zero(1, 1), 1, 1e-2);
  try {
    hum_solve_terminal(s, Vector::Zero(2), (Vector(2) << 1.0, 2.0).finished());
    FAIL() << "expected ControllabilityError";
  } catch (const ControllabilityError& e) {
    EXPECT_GT(e.condition_estimate(), kMaxGramianCondition);
  }
}

TEST(Hum, TerminalAccuracySingleParticle) {
  Rng rng = make_rng(14, Stream::test);
  for (Eigen::Index d = 1; d <= 3; ++d) {
    for (int rep = 0; rep < 2; ++rep) {
      const Matrix w = random_matrix(rng, d);
      const Vector x0 = random_vector(rng, d, -2, 2);
      const Vector y = random_vector(rng, d, -2, 2);
      const auto s = weights(w, 1, 1e-4);
      const HumSolution sol = hum_solve_terminal(s, x0, y);
      const auto xs = integrate_bias_controlled(x0, s, sol.bias);
      EXPECT_LE((xs.back() - y).norm(), 1e-3 * (1 + y.norm()));
    }
  }
}

TEST(Hum, ThreadCountDoesNotChangeResult) {
  Rng rng = make_rng(15, Stream::test);
  const auto s = weights(random_matrix(rng, 3), 1, 1e-3);
  const Vector x0 = random_vector(rng, 3), y = random_vector(rng, 3);
  const HumSolution a = hum_solve_terminal(s, x0, y, 1);
  const HumSolution b = hum_solve_terminal(s, x0, y, 3);
  EXPECT_EQ(a.gramian, b.gramian);
  EXPECT_EQ(a.lambda_T, b.lambda_T);
}

TEST(StaticCoefficients, ZeroWeight) {
  const auto s = ControlSchedule::constant(0.0, 0.0, TimeGrid(0.5, 2.0, 0.01));
  const auto c = c1_c2(s, 1.5);
  EXPECT_DOUBLE_EQ(c.c1, 1.0);
  EXPECT_NEAR(c.c2, 1.0, 1e-14);
}

TEST(StaticCoefficients, ConstantWeightAnalytic) {
  const double w = -3;
  const auto s = ControlSchedule::constant(w, 0.0, TimeGrid(0, 1, 1e-4));
  const auto c = c1_c2(s, 1.0);
  const double c1 = std::exp(w), c2 = (1 - std::exp(-w)) / w;
  EXPECT_NEAR(c1, 0.049787, 1e-6);
  EXPECT_NEAR(c2, 6.361845, 1e-6);
  EXPECT_NEAR(c.c1, c1, 1e-8 * c1);
  EXPECT_NEAR(c.c2, c2, 1e-8 * c2);
}

TEST(StaticCoefficients, PowerProfile) {
  const auto s = ControlSchedule::power_profile(-3, 4, 0.0, TimeGrid(0, 1, 1e-3));
  EXPECT_NEAR(c1_c2(s, 1.0).c1, std::exp(-0.6), 1e-14);
  EXPECT_NEAR(std::exp(-0.6), 0.548812, 1e-6);
  // c2 against a fine Simpson oracle of exp(3 s^5 / 5).
  const double oracle = simpson([](double t) { return std::exp(0.6 * std::pow(t, 5)); }, 0, 1, 20000);
  EXPECT_NEAR(c1_c2(s, 1.0).c2, oracle, 1e-6);
}

TEST(StaticCoefficients, OutsideHorizon) {
  const auto s = ControlSchedule::constant(1.0, 0.0, TimeGrid(0, 1, 0.1));
  EXPECT_THROW(c1_c2(s, 1.5), DomainError);
  EXPECT_THROW(c1_c2(s, -0.1), DomainError);
}

TEST(StaticControl, Examples) {
  const auto zero = ControlSchedule::constant(0.0, 0.0, TimeGrid(0, 1, 0.01));
  EXPECT_EQ(static_control(2.0, 0.0, zero).b, -2.0);
  EXPECT_EQ(static_control(1.3, 1.3, zero).b, 0.0);

  const auto decay = ControlSchedule::constant(-3.0, 0.0, TimeGrid(0, 1, 1e-4));
  const double analytic = -6.0 / (std::exp(3.0) - 1.0);
  EXPECT_NEAR(analytic, -0.314374, 1e-6);
  const auto res = static_control(2.0, 0.0, decay);
  EXPECT_NEAR(res.b, analytic, 1e-7);
  EXPECT_GT(res.c1T, 0.0);
  EXPECT_GT(res.c2T, 0.0);
  const auto fine = ControlSchedule::constant(-3.0, res.b, TimeGrid(0, 1, 1e-5));
  Vector x = v1(2.0);
  const TimeGrid& g = fine.grid();
  for (std::size_t k = 0; k < g.steps(); ++k) x = resnet_step(x, fine.weight(0), fine.bias(0), g.dt(), Activation::identity);
  EXPECT_NEAR(x(0), 0.0, 1e-4);
}

TEST(StaticControl, DegenerateHorizon) {
  const auto flat = ControlSchedule::constant(0.0, 0.0, TimeGrid(1.0, 1.0, 0.1));
  EXPECT_THROW(static_control(1.0, 0.0, flat), DomainError);
  const auto tiny = ControlSchedule::constant(-1.0, 0.0, TimeGrid(0, 1e-15, 1e-15));
  EXPECT_THROW(static_control(1.0, 0.0, tiny), DomainError);
}

TEST(StaticControl, FirstOrderInDt) {
  for (double w : {-3.0, 0.5}) {
    double prev = 0.0;
    for (double dt : {1e-2, 5e-3, 2.5e-3}) {
      const TimeGrid g(0, 1, dt);
      const double b = static_control(2.0, 0.0, ControlSchedule::constant(w, 0.0, g)).b;
      const double err = std::abs(
          integrate_ode(v1(2.0), ControlSchedule::constant(w, b, g), Activation::identity).terminal()(0));
      if (prev > 0.0) EXPECT_GE(std::log2(prev / err), 0.9) << "w = " << w;
      prev = err;
    }
  }
}

TEST(ClosedFormFlow, Examples) {
  EXPECT_NEAR(closed_form_flow(FlowCase::power, -3, 0, 0.0, 2.0, 0, 1), 2 * std::exp(-3.0), 1e-15);
  EXPECT_NEAR(2 * std::exp(-3.0), 0.099574, 1e-6);
  EXPECT_EQ(closed_form_flow(FlowCase::exp, 1.2, 0.7, 3.0, 0.4, 0.25, 0.25), 0.4);
  EXPECT_LE(std::abs(closed_form_flow(FlowCase::power, -3, 0, -0.314374, 2.0, 0, 1)), 1e-5);
}

TEST(ClosedFormFlow, MatchesAffineSolution) {
  // Constant weight: Phi = (x0 + b/w) e^{w t} - b/w.
  const double w = 0.8, b = -0.3, x0 = 1.1;
  for (double t : {0.2, 0.7, 1.0}) {
    EXPECT_NEAR(closed_form_flow(FlowCase::power, w, 0, b, x0, 0, t),
                (x0 + b / w) * std::exp(w * t) - b / w, 1e-12);
    EXPECT_NEAR(closed_form_flow(FlowCase::exp, w, 0, b, x0, 0, t),
                (x0 + b / w) * std::exp(w * t) - b / w, 1e-12);
  }
}

TEST(ClosedFormFlow, MatchesFineEuler) {
  const TimeGrid g(0, 1, 1e-5);
  const auto s = ControlSchedule::exp_profile(-3, 4, 0.5, g);
  const double euler = integrate_ode(v1(2.0), s, Activation::identity).terminal()(0);
  EXPECT_NEAR(closed_form_flow(FlowCase::exp, -3, 4, 0.5, 2.0, 0, 1), euler, 1e-4);
}

TEST(Extended, FrozenCoordinates) {
  const auto s = ControlSchedule::constant(0.4, 0.0, TimeGrid(0, 1, 0.01));
  const auto traj = integrate_extended(v1(1.5), v1(-0.5), s,
                                       [](double t, const Vector& x2, const Vector& x3) {
                                         return Vector(x3 - x2 * t);
                                       });
  for (const auto& e : traj) {
    EXPECT_EQ(e.x2(0), 1.5);
    EXPECT_EQ(e.x3(0), -0.5);
  }
}

TEST(Extended, StaticControlDrivesToTarget) {
  const auto s = ControlSchedule::constant(0.0, 0.0, TimeGrid(0, 1, 1e-3));
  const auto traj = integrate_extended(v1(2.0), v1(0.0), s,
                                       [&](double, const Vector& x2, const Vector& x3) {
                                         return v1(static_control(x2(0), x3(0), s).b);
                                       });
  EXPECT_NEAR(traj.back().x1(0), 0.0, 1e-10);
}

TEST(Extended, ZeroField) {
  const auto s = ControlSchedule::constant(0.0, 0.0, TimeGrid(0, 1, 0.1));
  const auto traj = integrate_extended(v1(2.0), v1(5.0), s,
                                       [](double, const Vector&, const Vector&) { return v1(0.0); });
  for (const auto& e : traj) EXPECT_EQ(e.x1(0), 2.0);
}
