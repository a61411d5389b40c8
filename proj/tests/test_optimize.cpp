#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "resflow/optimize.hpp"

using namespace resflow;

namespace {

const BoxDomain kBox{0.0, 0.25, 0.0, 2.5e-3};

struct Quadratic {
  ParamPoint center;
  double cw = 1.0, cb = 1.0;
  double operator()(const ParamPoint& p) const {
    return cw * std::pow(p.w - center.w, 2) + cb * std::pow(p.b - center.b, 2);
  }
  ParamPoint grad(const ParamPoint& p) const {
    return {2 * cw * (p.w - center.w), 2 * cb * (p.b - center.b)};
  }
};

DescentTrace run(const Quadratic& q, ParamPoint start, DescentOptions o) {
  return pgd(q, [&](const ParamPoint& p) { return q.grad(p); }, start, kBox, o);
}

}  // namespace

TEST(Project, Examples) {
  const ParamPoint in{0.1, 1e-3};
  EXPECT_EQ(project(in, kBox), in);
  EXPECT_EQ(project({-1.0, 0.001}, kBox), (ParamPoint{0.0, 0.001}));
  EXPECT_EQ(project({1.0, 1.0}, kBox), (ParamPoint{0.25, 0.0025}));
  const ParamPoint once = project({0.7, -3.0}, kBox);
  EXPECT_EQ(project(once, kBox), once);
  EXPECT_THROW(project(in, BoxDomain{1, 0, 0, 1}), ConfigurationError);
}

TEST(Pgd, InteriorQuadraticConverges) {
  const Quadratic q{{0.12, 1.3e-3}};
  DescentOptions o;
  o.step = 0.1;
  o.max_iters = 2000;
  const DescentTrace t = run(q, {0.25, 0.0}, o);
  EXPECT_NEAR(t.last().point.w, 0.12, 1e-6);
  EXPECT_NEAR(t.last().point.b, 1.3e-3, 1e-6);
  EXPECT_EQ(t.stop_reason, StopReason::small_grad);
}

TEST(Pgd, OutsideMinimizerProjects) {
  // Separable quadratic: the constrained minimizer is the clamp of (0.4, -1e-3).
  const Quadratic q{{0.4, -1e-3}, 1.0, 50.0};
  DescentOptions o;
  o.step = 0.005;
  o.max_iters = 20000;
  const DescentTrace t = run(q, {0.0, 2.5e-3}, o);
  // Grid-search oracle over the box.
  ParamPoint best{};
  double fbest = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 250; ++i) {
    for (int j = 0; j <= 250; ++j) {
      const ParamPoint p{0.25 * i / 250, 2.5e-3 * j / 250};
      if (q(p) < fbest) fbest = q(p), best = p;
    }
  }
  EXPECT_NEAR(t.last().point.w, best.w, 1e-6);
  EXPECT_NEAR(t.last().point.b, best.b, 1e-6);
}

TEST(Pgd, IteratesStayInBoxAndDecrease) {
  const Quadratic q{{0.5, 0.01}, 2.0, 3.0};
  DescentOptions o;
  o.step = 0.1;  // below 1 / (largest curvature 6)
  o.max_iters = 500;
  const DescentTrace t = run(q, {0.0, 0.0}, o);
  for (std::size_t k = 0; k < t.iterates.size(); ++k) {
    EXPECT_TRUE(kBox.contains(t.iterates[k].point));
    if (k) EXPECT_LE(t.iterates[k].objective, t.iterates[k - 1].objective);
  }
}

TEST(Pgd, Deterministic) {
  const Quadratic q{{0.2, 1e-3}};
  DescentOptions o;
  o.step = 0.05;
  o.max_iters = 300;
  const DescentTrace a = run(q, {0.0, 0.0}, o);
  const DescentTrace b = run(q, {0.0, 0.0}, o);
  ASSERT_EQ(a.iterates.size(), b.iterates.size());
  for (std::size_t k = 0; k < a.iterates.size(); ++k) {
    EXPECT_EQ(a.iterates[k].point, b.iterates[k].point);
    EXPECT_EQ(a.iterates[k].objective, b.iterates[k].objective);
  }
}

TEST(Pgd, StoppingRules) {
  const Quadratic q{{0.4, 0.0}};
  DescentOptions o;
  o.step = 0.1;
  o.max_iters = 10;
  o.grad_tol = 0.0;
  EXPECT_EQ(run(q, {0.0, 0.0}, o).stop_reason, StopReason::max_iters);
  EXPECT_EQ(run(q, {0.0, 0.0}, o).iterates.size(), 11u);
  o.max_iters = 1000;
  o.step_tol = 1e-12;
  const DescentTrace pinned = run(q, {0.0, 0.0}, o);
  EXPECT_EQ(pinned.stop_reason, StopReason::small_step);
  EXPECT_EQ(pinned.last().point.w, 0.25);
}

TEST(Pgd, Errors) {
  const Quadratic q{{0.1, 0.0}};
  DescentOptions o;
  EXPECT_THROW(run(q, {0.3, 0.0}, o), DomainError);
  o.step = 0.0;
  EXPECT_THROW(run(q, {0.1, 0.0}, o), ConfigurationError);
  o.step = 1e-3;
  int calls = 0;
  try {
    pgd(q, [&](const ParamPoint&) {
          return ++calls < 4 ? ParamPoint{1.0, 0.0} : ParamPoint{std::nan(""), 0.0};
        }, {0.2, 0.0}, kBox, o);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("iterate 3"), std::string::npos) << e.what();
  }
}

TEST(Pgd, FarthestCorner) {
  EXPECT_EQ(farthest_corner(kBox, {0.12, 0.0}), (ParamPoint{0.25, 2.5e-3}));
  EXPECT_EQ(farthest_corner(kBox, {0.2, 2e-3}), (ParamPoint{0.0, 0.0}));
}
