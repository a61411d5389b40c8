#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "resflow/experiments.hpp"

using namespace resflow;
using namespace resflow::experiments;
namespace fs = std::filesystem;

namespace {

Context context(const std::string& name, const std::string& ini = "") {
  Context ctx;
  ctx.cfg = io::Config::from_string(ini);
  ctx.out_dir = fs::temp_directory_path() / ("resflow_exp_" + name);
  fs::remove_all(ctx.out_dir);
  return ctx;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(ParamGrid, PaperSizes) {
  const ParamGrid micro = make_param_grid({0, 0.25, 0, 2.5e-3}, 0.01);
  EXPECT_EQ(micro.nw, 26u);
  EXPECT_EQ(micro.nb, 26u);
  EXPECT_EQ(micro.size(), 676u);
  EXPECT_NEAR(micro.center().w, 0.125, 1e-15);
  EXPECT_NEAR(micro.center().b, 1.25e-3, 1e-17);
  const ParamGrid mf = make_param_grid({0, 0.25, 0, 2.5e-3}, 0.02);
  EXPECT_EQ(mf.size(), 169u);
  EXPECT_NEAR(mf.center().w, 0.12, 1e-15);
  EXPECT_NEAR(mf.center().b, 1.2e-3, 1e-17);
}

TEST(ParamGrid, StratifiedNodesCoverBlocks) {
  const ParamGrid g = make_param_grid({0, 0.25, 0, 2.5e-3}, 0.01);
  Rng rng = make_rng(1, Stream::micro_nodes);
  const auto idx = stratified_nodes(g, 20, rng);
  ASSERT_EQ(idx.size(), 20u);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 20u);
  std::set<std::pair<std::size_t, std::size_t>> blocks;
  const auto block = [](std::size_t i, std::size_t n, std::size_t r) {
    std::size_t b = 0;
    while (b + 1 < r && (b + 1) * n / r <= i) ++b;
    return b;
  };
  for (auto k : idx) blocks.insert({block(k % g.nw, g.nw, 5), block(k / g.nw, g.nb, 4)});
  EXPECT_EQ(blocks.size(), 20u);
  EXPECT_THROW(stratified_nodes(g, 0, rng), ConfigurationError);
}

TEST(Lists, Parsing) {
  EXPECT_EQ(parse_list<double>("1, 2.5,3"), (std::vector<double>{1, 2.5, 3}));
  const auto pts = parse_points("0.1,0.001; 0.2,0");
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[1].w, 0.2);
  EXPECT_THROW(parse_points("0.1"), ConfigurationError);
}

TEST(Decay, PaperCurves) {
  const auto r = run_decay(context("decay"));
  ASSERT_EQ(r.curves.size(), 3u);
  for (const auto& c : r.curves) EXPECT_LE(c.terminal_error, 1e-2) << c.label;
  EXPECT_LT(r.curves[2].crossing, r.curves[0].crossing);
  EXPECT_LT(r.curves[2].crossing, r.curves[1].crossing);
  const auto table = io::read_csv(fs::temp_directory_path() / "resflow_exp_decay" / "decay.csv");
  EXPECT_EQ(table.rows.size(), 101u);
  EXPECT_EQ(table.header, (std::vector<std::string>{"t", "phi_a", "phi_b", "phi_c"}));
}

TEST(Decay, ClosedFormMissIsSecondOrder) {
  // b comes from a trapezoid c2, so the exact flow misses y by O(dt^2).
  const auto coarse = run_decay(context("decay_coarse"));
  const auto fine = run_decay(context("decay_fine", "[decay]\ndt = 1e-3\n"));
  for (std::size_t i = 0; i < 3; ++i) {
    const double e0 = coarse.curves[i].closed_form_terminal_error;
    const double e1 = fine.curves[i].closed_form_terminal_error;
    if (e0 <= 1e-12) continue;
    EXPECT_GE(e0 / e1, 50.0) << coarse.curves[i].label;
  }
}

TEST(Decay, TargetAtStartWithZeroWeightIsFlat) {
  const auto r = run_decay(context("decay_flat", "[decay]\ny = 2\nomega = 0\n"));
  for (const auto& c : r.curves) {
    EXPECT_EQ(c.b, 0.0) << c.label;
    for (double v : c.euler) EXPECT_EQ(v, 2.0);
    for (double v : c.closed_form) EXPECT_EQ(v, 2.0);
  }
}

TEST(Decay, TargetAtStartConstantWeightHoldsEquilibrium) {
  // x' = -3x + b stays at 2 for b = 6.
  const auto r = run_decay(context("decay_eq", "[decay]\ny = 2\n"));
  const auto& a = r.curves[0];
  EXPECT_NEAR(a.b, 6.0, 1e-3);
  for (double v : a.euler) EXPECT_NEAR(v, 2.0, 1e-3);
}

TEST(Hum, DemoDefaults) {
  const auto r = run_hum(context("hum"));
  EXPECT_NEAR(r.bias_min, 1.0, 1e-9);
  EXPECT_NEAR(r.bias_max, 1.0, 1e-9);
  EXPECT_LE(r.terminal_error, 1e-3);
  EXPECT_LE(r.duality_gap, 1e-4);
}

TEST(Hum, UncontrolledTargetNeedsNoBias) {
  const double y = 1.5 * std::exp(-0.5);
  const auto r = run_hum(context("hum_free", "[hum]\nw = -0.5\nx0 = 1.5\ndt = 1e-3\ny = " +
                                                 io::format_double(y) + "\n"));
  EXPECT_LE(std::max(std::abs(r.bias_min), std::abs(r.bias_max)), 2e-3);
}

TEST(Hum, SharedBiasFailureSurfaces) {
  EXPECT_THROW(run_hum(context("hum_fail", "[hum]\nparticles = 2\nx0 = 0\ny = 1,2\ndt = 1e-2\n")),
               ControllabilityError);
}

TEST(StaticControlStudy, OrdersAndExactZeroWeight) {
  const auto studies = run_static_control(context("static"));
  ASSERT_EQ(studies.size(), 3u);
  EXPECT_EQ(studies[1].rows[0].b, -2.0);
  for (const auto& r : studies[1].rows) EXPECT_LE(r.error, 1e-12);
  for (const auto* s : {&studies[0], &studies[2]}) {
    for (std::size_t i = 1; i < s->rows.size(); ++i) EXPECT_GE(s->rows[i].order, 0.9);
  }
  EXPECT_LE(studies[1].extended_error, 1e-12);
}

TEST(MicroSurface, SurrogateAtPaperConfiguration) {
  const Context ctx = context("micro");
  const auto setup = micro_setup(ctx);
  EXPECT_EQ(setup.params.size(), 676u);
  const auto res = compute_micro_surface(ctx, setup);
  EXPECT_EQ(res.nodes.size(), 20u);
  EXPECT_LE(res.node_residual_max, 1e-8);
  EXPECT_EQ(res.surrogate.jitter(), 0.0);
  // Nodes reproduce the independently recomputed loss.
  for (std::size_t n = 0; n < 3; ++n) {
    const double truth = micro_loss(setup, res.nodes[n]);
    EXPECT_NEAR(res.surrogate.evaluate(res.nodes[n]), truth, 1e-8 * truth);
  }
  EXPECT_LE(res.relerr.max, 0.1);
}

TEST(MicroSurface, ListedNodesOverrideSampling) {
  const Context ctx = context("micro_listed", "[micro]\nparticles = 5\nT = 1\nnode_list = 0.1,0.001; 0.2,0.002\n");
  const auto res = compute_micro_surface(ctx, micro_setup(ctx));
  ASSERT_EQ(res.nodes.size(), 2u);
  EXPECT_EQ(res.nodes[1], (ParamPoint{0.2, 0.002}));
}

TEST(MicroDescent, ReachesGridMinimumNeighborhood) {
  const auto r = run_micro_descent(context("micro_descent"));
  const auto& last = r.descent.trace.last();
  EXPECT_TRUE(r.surface.grid.box.contains(last.point));
  EXPECT_LE(last.objective, r.descent.grid_min + r.descent.neighborhood_range);
  EXPECT_EQ(r.descent.monotone.violations, 0u);
  EXPECT_LE(r.relative_mean_error, 0.05);
}

TEST(MeanField, SurfaceAndDescent) {
  const auto r = run_mf_descent(context("mf"));
  EXPECT_EQ(r.surface.grid.size(), 169u);
  EXPECT_LE(r.surface.node_residual_max, 1e-8);
  EXPECT_LE(r.surface.relerr.max, 0.3);
  EXPECT_LE(r.w1_to_target, r.w1_tolerance);
  EXPECT_EQ(r.descent.monotone.violations, 0u);
}

TEST(Consistency, ZeroVelocityIsSamplingErrorOnly) {
  const std::string small = "[consistency]\nsizes = 200\nreplicas = 8\n";
  const auto moving = run_consistency(context("cons_move", small));
  const auto still = run_consistency(context("cons_still", small + "w = 0\nb = 0\n"));
  // With no motion both measures are mu0, so W1 is the sampling error of n draws.
  Rng rng = make_rng(77, Stream::test);
  const Density1D rho0 = mf_setup(context("cons_ref")).rho0;
  double baseline = 0.0;
  for (int r = 0; r < 8; ++r) baseline += wasserstein1(SampleSet(draw_samples(rho0, 200, rng)), rho0) / 8;
  EXPECT_LE(std::abs(still.rows[0].mean - baseline), 3 * still.rows[0].std_error + 1e-3);
  EXPECT_GT(moving.rows[0].mean, 0.0);
}

TEST(Determinism, RerunsAreByteIdentical) {
  for (const char* name : {"a", "b"}) {
    Context ctx = context(std::string("det_") + name,
                          "[meanfield]\nrepeats = 10\n[consistency]\nsizes = 100,500\nreplicas = 3\n");
    ctx.threads = name[0] == 'a' ? 1 : 3;
    run_mf_surface(ctx);
    run_consistency(ctx);
    run_decay(ctx);
  }
  const fs::path a = fs::temp_directory_path() / "resflow_exp_det_a";
  const fs::path b = fs::temp_directory_path() / "resflow_exp_det_b";
  int compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
    ++compared;
  }
  EXPECT_GE(compared, 8);
}

TEST(Manifest, EchoesAssumptions) {
  const Context ctx = context("manifest", "[consistency]\nsizes = 50\nreplicas = 2\n");
  run_consistency(ctx);
  const auto doc = nlohmann::json::parse(slurp(ctx.out_dir / "manifest.json"));
  EXPECT_EQ(doc["assumptions"]["gaussian_spread_convention"], "variance");
  EXPECT_EQ(doc["files"].size(), 3u);
  EXPECT_TRUE(doc["config"].contains("meanfield.dx"));
}
