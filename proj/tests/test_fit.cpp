#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "scenreach/fit.hpp"

namespace {

using namespace scenreach;

TrajectoryBatch points_1d(std::initializer_list<double> xs) {
  std::vector<Trajectory> trs;
  for (double x : xs) trs.emplace_back(Matrix::Constant(1, 1, x));
  return TrajectoryBatch(std::move(trs));
}

TrajectoryBatch points_2d(const std::vector<std::pair<double, double>>& xs) {
  std::vector<Trajectory> trs;
  for (auto [a, b] : xs) {
    Matrix s(2, 1);
    s << a, b;
    trs.emplace_back(s);
  }
  return TrajectoryBatch(std::move(trs));
}

TrajectoryBatch random_batch(std::mt19937_64& rng, int N, int T, int n, double scale = 1.0) {
  std::normal_distribution<double> Z;
  std::vector<Trajectory> trs;
  for (int i = 0; i < N; ++i) {
    Matrix s(n, T + 1);
    for (int k = 0; k <= T; ++k)
      for (int d = 0; d < n; ++d) s(d, k) = scale * Z(rng) * (1.0 + 0.3 * k) + 0.2 * k;
    trs.emplace_back(s);
  }
  return TrajectoryBatch(std::move(trs));
}

FitConfig ball_cfg(double rho, NormKind p = NormKind::l2) {
  FitConfig c;
  c.geometry = Geometry::ball;
  c.p = p;
  c.rho = rho;
  return c;
}

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

constexpr double kTol = 1e-5;

TEST(FitBall, TwoPointHardRegime) {
  const auto r = fit_ball_radius(points_1d({-1.0, 1.0}), ball_cfg(10.0));
  const auto& s = r.tube.as_ball().steps[0];
  EXPECT_NEAR(s.center[0], 0.0, kTol);
  EXPECT_NEAR(s.radius, 1.0, kTol);
  EXPECT_NEAR(r.slacks[0], 0.0, kTol);
  EXPECT_NEAR(r.slacks[1], 0.0, kTol);
  EXPECT_NEAR(r.objective_value, 1.0, kTol);
}

TEST(FitBall, TwoPointSoftRegimeTieBreaksToOrigin) {
  const auto r = fit_ball_radius(points_1d({-1.0, 1.0}), ball_cfg(0.25));
  const auto& s = r.tube.as_ball().steps[0];
  EXPECT_TRUE(r.diagnostics.tie_break_applied);
  EXPECT_NEAR(s.radius, 0.0, kTol);
  EXPECT_NEAR(s.center[0], 0.0, 1e-3);
  EXPECT_NEAR(r.slacks[0], 1.0, 1e-3);
  EXPECT_NEAR(r.slacks[1], 1.0, 1e-3);
  EXPECT_NEAR(r.objective_value, 0.5, kTol);
}

TEST(FitBall, TwoPointWithBoxPerturbation) {
  auto cfg = ball_cfg(10.0);
  cfg.perturbation = PerturbationModel::uniform_box(1, 0.1);
  const auto r = fit_ball_radius(points_1d({-1.0, 1.0}), cfg);
  EXPECT_NEAR(r.tube.as_ball().steps[0].radius, 1.1, kTol);
  EXPECT_EQ(r.diagnostics.constraint_rows, 4U);
}

TEST(FitBall, SingleTrajectoryIsCoveredFreely) {
  std::mt19937_64 rng(1);
  const auto batch = random_batch(rng, 1, 3, 2);
  for (auto p : {NormKind::l1, NormKind::l2, NormKind::linf}) {
    const auto r = fit_ball_radius(batch, ball_cfg(0.7, p));
    for (int k = 0; k <= 3; ++k) {
      const auto& s = r.tube.as_ball().steps[static_cast<std::size_t>(k)];
      EXPECT_NEAR(s.radius, 0.0, kTol);
      EXPECT_LT((s.center - batch[0].state(k)).norm(), 1e-4);
    }
    EXPECT_NEAR(r.slacks[0], 0.0, kTol);
  }
}

TEST(FitBall, VolumeObjectiveInOneDimensionRescalesRho) {
  std::mt19937_64 rng(2);
  const auto batch = random_batch(rng, 12, 2, 1);
  for (double rho : {0.05, 0.2, 1.0}) {
    auto vcfg = ball_cfg(rho);
    vcfg.proxy = SizeProxy::ball_volume;
    const auto v = fit(batch, vcfg);
    const auto r = fit_ball_radius(batch, ball_cfg(rho / 2.0));
    for (int k = 0; k <= 2; ++k)
      EXPECT_NEAR(v.tube.as_ball().steps[static_cast<std::size_t>(k)].radius,
                  r.tube.as_ball().steps[static_cast<std::size_t>(k)].radius, 1e-5);
  }
}

TEST(FitBall, VolumeSingleTrajectory) {
  auto cfg = ball_cfg(1.0);
  cfg.proxy = SizeProxy::ball_volume;
  const auto r = fit(points_2d({{0.3, -0.2}}), cfg);
  EXPECT_NEAR(r.tube.as_ball().steps[0].radius, 0.0, 1e-3);
  EXPECT_NEAR(r.slacks[0], 0.0, kTol);
}

TEST(FitBall, VolumeMatchesEnclosingCircleGridSearch) {
  const auto batch = points_2d({{0.0, 0.0}, {1.0, 0.2}, {0.3, 0.9}});
  auto cfg = ball_cfg(1e3);
  cfg.proxy = SizeProxy::ball_volume;
  const auto r = fit(batch, cfg);

  // grid oracle: smallest covering radius over centers, refined twice
  double best = std::numeric_limits<double>::infinity(), bx = 0.5, by = 0.5;
  for (double h : {1e-2, 1e-4, 1e-6}) {
    const double cx0 = bx, cy0 = by;
    for (int a = -100; a <= 100; ++a)
      for (int b = -100; b <= 100; ++b) {
        const double cx = cx0 + a * h, cy = cy0 + b * h;
        double rad = 0.0;
        for (int i = 0; i < 3; ++i)
          rad = std::max(rad, std::hypot(batch[i].state(0)[0] - cx, batch[i].state(0)[1] - cy));
        if (rad < best) {
          best = rad;
          bx = cx;
          by = cy;
        }
      }
  }
  EXPECT_NEAR(r.tube.as_ball().steps[0].radius, best, 1e-3);
  EXPECT_NEAR(r.objective_value, std::numbers::pi * best * best, 1e-3);
}

TEST(FitEllipsoid, IdentityShapeReproducesEuclideanBall) {
  std::mt19937_64 rng(3);
  const auto batch = random_batch(rng, 15, 2, 2);
  auto ecfg = ball_cfg(0.3);
  ecfg.geometry = Geometry::ellipsoid_fixed;
  ecfg.shapes = {Matrix::Identity(2, 2)};
  const auto e = fit_ellipsoid_fixed(batch, ecfg);
  const auto b = fit_ball_radius(batch, ball_cfg(0.3));
  EXPECT_NEAR(e.objective_value, b.objective_value, 2 * ecfg.tol);
  for (int k = 0; k <= 2; ++k)
    EXPECT_NEAR(e.tube.as_ellipsoid().steps[static_cast<std::size_t>(k)].scale,
                b.tube.as_ball().steps[static_cast<std::size_t>(k)].radius, 1e-8);
}

TEST(FitEllipsoid, AnisotropicShapeOnTwoPoints) {
  FitConfig cfg;
  cfg.geometry = Geometry::ellipsoid_fixed;
  cfg.rho = 100.0;
  Matrix H = Matrix::Zero(2, 2);
  H.diagonal() << 2.0, 1.0;
  cfg.shapes = {H};
  const auto r = fit(points_2d({{1.0, 0.0}, {-1.0, 0.0}}), cfg);
  const auto& s = r.tube.as_ellipsoid().steps[0];
  EXPECT_NEAR(s.scale, 2.0, kTol);
  EXPECT_LT(s.center.norm(), 1e-4);
}

TEST(FitEllipsoid, SingleTrajectoryAndBadShape) {
  FitConfig cfg;
  cfg.geometry = Geometry::ellipsoid_fixed;
  cfg.shapes = {Matrix::Identity(2, 2)};
  const auto r = fit(points_2d({{0.4, 0.1}}), cfg);
  EXPECT_NEAR(r.tube.as_ellipsoid().steps[0].scale, 0.0, kTol);
  EXPECT_LT((r.tube.as_ellipsoid().steps[0].center - v2(0.4, 0.1)).norm(), 1e-4);

  cfg.shapes = {-Matrix::Identity(2, 2)};
  EXPECT_THROW(fit(points_2d({{0.4, 0.1}, {0.0, 0.0}}), cfg), InputError);
}

TEST(FitLogdet, SymmetricIntervalInOneDimension) {
  FitConfig cfg;
  cfg.geometry = Geometry::ellipsoid_logdet;
  cfg.rho = 100.0;
  const auto r = fit(points_1d({-1.0, 1.0}), cfg);
  const auto& s = r.tube.as_logdet().steps[0];
  EXPECT_NEAR(s.C(0, 0), 1.0, 1e-4);
  EXPECT_NEAR(s.offset[0], 0.0, 1e-4);
  EXPECT_NEAR(r.slacks[0] + r.slacks[1], 0.0, 1e-6);
  EXPECT_NEAR(r.objective_value, 0.0, 1e-4);
}

TEST(FitLogdet, SymmetricDataGivesZeroOffset) {
  FitConfig cfg;
  cfg.geometry = Geometry::ellipsoid_logdet;
  cfg.rho = 50.0;
  const auto r = fit(points_2d({{1.0, 0.5}, {-1.0, -0.5}, {0.3, -0.8}, {-0.3, 0.8}}), cfg);
  EXPECT_LT(r.tube.as_logdet().steps[0].offset.norm(), 1e-4);
}

TEST(FitLogdet, DegenerateAxisIsReported) {
  FitConfig cfg;
  cfg.geometry = Geometry::ellipsoid_logdet;
  try {
    fit(points_2d({{1.0, 0.5}, {-1.0, 0.5}, {0.3, 0.5}}), cfg);
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("axis 1"), std::string::npos) << e.what();
  }
  cfg.logdet_shape = LogdetShape::full;
  EXPECT_THROW(fit(points_2d({{1.0, 0.5}, {-1.0, 0.2}}), cfg), ConfigError);
}

TEST(FitZonotope, IntervalInOneDimension) {
  FitConfig cfg;
  cfg.geometry = Geometry::zonotope;
  cfg.rho = 10.0;
  cfg.shapes = {Matrix::Identity(1, 1)};
  const auto r = fit(points_1d({-1.0, 1.0}), cfg);
  const auto& s = r.tube.as_zonotope().steps[0];
  EXPECT_NEAR(s.center[0], 0.0, kTol);
  EXPECT_NEAR(s.halfwidths[0], 1.0, kTol);
}

TEST(FitZonotope, SingleTrajectoryAndSquare) {
  FitConfig cfg;
  cfg.geometry = Geometry::zonotope;
  cfg.rho = 100.0;
  cfg.shapes = {Matrix::Identity(2, 2)};
  const auto one = fit(points_2d({{0.2, -0.4}}), cfg);
  EXPECT_LT(one.tube.as_zonotope().steps[0].halfwidths.norm(), kTol);
  EXPECT_LT((one.tube.as_zonotope().steps[0].center - v2(0.2, -0.4)).norm(), 1e-4);

  const auto sq = fit(points_2d({{1, 1}, {1, -1}, {-1, 1}, {-1, -1}, {0.2, 0.3}}), cfg);
  const auto& s = sq.tube.as_zonotope().steps[0];
  EXPECT_LT(s.center.norm(), 1e-4);
  EXPECT_NEAR(s.halfwidths[0], 1.0, kTol);
  EXPECT_NEAR(s.halfwidths[1], 1.0, kTol);

  Matrix rank1(2, 2);
  rank1 << 1, 2, 2, 4;
  cfg.shapes = {rank1};
  EXPECT_THROW(fit(points_2d({{1, 1}, {0, 0}}), cfg), InputError);
}

TEST(DefaultShapes, IsotropicDataWhitens) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> Z(0.0, 0.5);
  std::vector<Trajectory> trs;
  for (int i = 0; i < 10000; ++i) trs.emplace_back(Matrix(v2(Z(rng), Z(rng))));
  const auto s = default_shapes(TrajectoryBatch(std::move(trs)), Geometry::ellipsoid_fixed);
  ASSERT_EQ(s.matrices.size(), 1U);
  EXPECT_TRUE(s.fallback_steps.empty());
  EXPECT_LT((s.matrices[0] - 2.0 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.2);
}

TEST(DefaultShapes, IdenticalTrajectoriesFallBackToIdentity) {
  const auto batch = points_2d({{0.5, 0.5}, {0.5, 0.5}});
  const auto s = default_shapes(batch, Geometry::ellipsoid_fixed);
  EXPECT_EQ(s.fallback_steps, std::vector<int>{0});
  EXPECT_EQ(s.matrices[0], Matrix::Identity(2, 2));
  EXPECT_FALSE(s.note.empty());
  EXPECT_THROW(default_shapes(points_2d({{0, 0}}), Geometry::ellipsoid_fixed), InputError);
}

TEST(DefaultShapes, ZonotopeGeneratorsHaveFullRowRank) {
  std::mt19937_64 rng(5);
  const auto batch = random_batch(rng, 30, 3, 2);
  const auto s = default_shapes(batch, Geometry::zonotope);
  ASSERT_EQ(s.matrices.size(), 4U);
  for (const auto& G : s.matrices) {
    EXPECT_EQ(G.rows(), 2);
    EXPECT_EQ(G.cols(), 4);
    EXPECT_EQ(Eigen::FullPivLU<Matrix>(G).rank(), 2);
    EXPECT_EQ(G.leftCols(2), Matrix::Identity(2, 2));
  }
  const auto again = default_shapes(batch, Geometry::zonotope);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(again.matrices[k], s.matrices[k]);
}

TEST(Fit, RejectsBadConfigurations) {
  const auto batch = points_1d({0.0, 1.0});
  EXPECT_THROW(fit(batch, ball_cfg(0.0)), InputError);
  auto cfg = ball_cfg(1.0);
  cfg.max_rows = 1;
  EXPECT_THROW(fit(batch, cfg), ConfigError);
  cfg = ball_cfg(1.0);
  cfg.proxy = SizeProxy::halfwidth_sum;
  EXPECT_THROW(fit(batch, cfg), InputError);
}

// Properties shared by every geometry.

std::vector<FitConfig> geometry_configs() {
  std::vector<FitConfig> out;
  for (auto p : {NormKind::l1, NormKind::l2, NormKind::linf}) out.push_back(ball_cfg(1.0, p));
  FitConfig vol = ball_cfg(1.0);
  vol.proxy = SizeProxy::ball_volume;
  out.push_back(vol);
  FitConfig e;
  e.geometry = Geometry::ellipsoid_fixed;
  out.push_back(e);
  FitConfig l;
  l.geometry = Geometry::ellipsoid_logdet;
  out.push_back(l);
  FitConfig z;
  z.geometry = Geometry::zonotope;
  out.push_back(z);
  return out;
}

double proxy_total(const FitResult& r, const FitConfig& cfg) {
  return size_report(r.tube, cfg.proxy.value_or(default_proxy(cfg.geometry))).total;
}

TEST(FitProperties, SlackComplementarityAndRobustFeasibility) {
  std::mt19937_64 rng(6);
  const auto batch = random_batch(rng, 10, 2, 2, 0.5);
  for (auto cfg : geometry_configs()) {
    cfg.rho = 0.08;
    cfg.perturbation = PerturbationModel::uniform_box(2, 0.03);
    const auto r = fit(batch, cfg);
    EXPECT_LE(r.diagnostics.max_violation, 10 * cfg.tol);
    for (int i = 0; i < batch.size(); ++i) {
      double worst = -std::numeric_limits<double>::infinity();
      for (int k = 0; k <= batch.horizon(); ++k)
        for (const auto& v : perturbation_vertices(cfg.perturbation, batch[i].state(k)))
          worst = std::max(worst, margin(r.tube, k, v));
      EXPECT_NEAR(r.slacks[static_cast<std::size_t>(i)], std::max(0.0, worst), 10 * cfg.tol);
      EXPECT_LE(worst, r.slacks[static_cast<std::size_t>(i)] + 10 * cfg.tol);
    }
  }
}

TEST(FitProperties, ScalarizationMonotonicity) {
  std::mt19937_64 rng(7);
  const auto batch = random_batch(rng, 12, 2, 2, 0.5);
  for (auto cfg : geometry_configs()) {
    double prev_size = -std::numeric_limits<double>::infinity();
    double prev_slack = std::numeric_limits<double>::infinity();
    for (double rho : {0.01, 0.03, 0.1, 0.3, 1.0, 3.0}) {
      cfg.rho = rho;
      const auto r = fit(batch, cfg);
      const double size = proxy_total(r, cfg);
      double slack = 0.0;
      for (double s : r.slacks) slack += s;
      const double slop = 10 * cfg.tol * std::max(1.0, std::abs(r.objective_value)) / std::min(1.0, rho);
      EXPECT_GE(size, prev_size - slop) << "rho " << rho;
      EXPECT_LE(slack, prev_slack + slop) << "rho " << rho;
      prev_size = size;
      prev_slack = slack;
    }
  }
}

TEST(FitProperties, HardConstraintLimit) {
  std::mt19937_64 rng(8);
  const auto batch = random_batch(rng, 8, 1, 2, 0.5);
  for (auto cfg : geometry_configs()) {
    cfg.rho = 1e6;
    const auto r = fit(batch, cfg);
    double slack = 0.0;
    for (double s : r.slacks) slack += s;
    EXPECT_LE(slack, 1e-4);
    for (const auto& tr : batch) EXPECT_LE(trajectory_margin(r.tube, tr), 1e-4);
  }
}

TEST(FitProperties, Deterministic) {
  std::mt19937_64 rng(9);
  const auto batch = random_batch(rng, 10, 2, 2, 0.5);
  for (auto cfg : geometry_configs()) {
    cfg.rho = 0.2;
    const auto a = fit(batch, cfg), b = fit(batch, cfg);
    EXPECT_EQ(a.objective_value, b.objective_value);
    EXPECT_EQ(a.slacks, b.slacks);
  }
}

}  // namespace
