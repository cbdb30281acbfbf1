#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "scenreach/conic.hpp"

namespace {

using namespace scenreach::conic;

TEST(Conic, ScalarLowerBound) {
  ConicProgram p;
  const int x = p.add_variables(1);
  p.set_objective(x, 1.0);
  p.add_nonnegative(LinExpr(-1.0).add(x, 1.0));
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal) << s.message;
  EXPECT_NEAR(s.primal[x], 1.0, 1e-7);
  EXPECT_NEAR(s.objective_value, 1.0, 1e-7);
}

TEST(Conic, SecondOrderEpigraphWithEqualities) {
  ConicProgram p;
  const int x = p.add_variables(3);  // x, y, t
  p.set_objective(x + 2, 1.0);
  p.add_equality(LinExpr(-3.0).add(x, 1.0));
  p.add_equality(LinExpr(-4.0).add(x + 1, 1.0));
  p.add_second_order(LinExpr::variable(x + 2), {LinExpr::variable(x), LinExpr::variable(x + 1)});
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal) << s.message;
  EXPECT_NEAR(s.objective_value, 5.0, 1e-7);
  EXPECT_LE(p.max_violation(s.primal), 1e-7);
}

TEST(Conic, ExponentialConeEpigraphOfNegativeLog) {
  // min -log(c) + c  ->  c = 1, value 1
  ConicProgram p;
  const int c = p.add_variables(2);
  const int t = c + 1;
  p.set_objective(t, 1.0);
  p.set_objective(c, 1.0);
  p.add_exponential(LinExpr().add(t, -1.0), LinExpr(1.0), LinExpr::variable(c));
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal) << s.message;
  EXPECT_NEAR(s.primal[c], 1.0, 1e-4);
  EXPECT_NEAR(s.objective_value, 1.0, 1e-7);
}

TEST(Conic, PowerConeEpigraphOfSquare) {
  // min u - 2r  with u >= r^2  ->  r = 1, value -1
  ConicProgram p;
  const int u = p.add_variables(2);
  const int r = u + 1;
  p.set_objective(u, 1.0);
  p.set_objective(r, -2.0);
  p.add_power(LinExpr::variable(u), LinExpr(1.0), LinExpr::variable(r), 0.5);
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal) << s.message;
  EXPECT_NEAR(s.primal[r], 1.0, 1e-4);
  EXPECT_NEAR(s.objective_value, -1.0, 1e-7);
}

TEST(Conic, DetectsInfeasibility) {
  ConicProgram p;
  const int x = p.add_variables(1);
  p.set_objective(x, 1.0);
  p.add_nonnegative(LinExpr(-2.0).add(x, 1.0));  // x >= 2
  p.add_nonnegative(LinExpr(1.0).add(x, -1.0));  // x <= 1
  EXPECT_EQ(solve(p).status, SolveStatus::infeasible);
}

TEST(Conic, DetectsInconsistentEqualities) {
  ConicProgram p;
  const int x = p.add_variables(1);
  p.add_equality(LinExpr(-1.0).add(x, 1.0));
  p.add_equality(LinExpr(-2.0).add(x, 1.0));
  EXPECT_EQ(solve(p).status, SolveStatus::infeasible);
}

TEST(Conic, DetectsUnboundedness) {
  ConicProgram p;
  const int x = p.add_variables(1);
  p.set_objective(x, -1.0);
  p.add_nonnegative(LinExpr::variable(x));
  EXPECT_EQ(solve(p).status, SolveStatus::unbounded);
}

TEST(Conic, RejectsMalformedPrograms) {
  ConicProgram p;
  p.add_variables(1);
  EXPECT_THROW(p.add_nonnegative(LinExpr::variable(3)), scenreach::InputError);
  EXPECT_THROW(p.set_objective(0, std::numeric_limits<double>::infinity()), scenreach::InputError);
  EXPECT_THROW(p.add_power(LinExpr(), LinExpr(), LinExpr(), 1.5), scenreach::InputError);
}

TEST(Conic, NonPositiveToleranceIsReportedNotThrown) {
  ConicProgram p;
  p.add_variables(1);
  EXPECT_EQ(solve(p, 0.0).status, SolveStatus::numerical_failure);
}

TEST(Conic, TieBreakPicksMinimumNormPoint) {
  ConicProgram p;
  const int x = p.add_variables(1);
  p.add_nonnegative(LinExpr(1.0).add(x, 1.0));
  p.add_nonnegative(LinExpr(1.0).add(x, -1.0));
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  const auto tb = tie_break(p, s.objective_value, 1e-8, &s.primal);
  ASSERT_EQ(tb.status, SolveStatus::optimal) << tb.message;
  EXPECT_NEAR(tb.primal[x], 0.0, 1e-6);
}

TEST(Conic, TieBreakPrefersOriginSideOfOptimalFace) {
  // min y  s.t. y >= 0, 1 <= x <= 3  ->  optimal face x in [1, 3], min-norm x = 1
  ConicProgram p;
  const int x = p.add_variables(2);
  const int y = x + 1;
  p.set_objective(y, 1.0);
  p.add_nonnegative(LinExpr::variable(y));
  p.add_nonnegative(LinExpr(-1.0).add(x, 1.0));
  p.add_nonnegative(LinExpr(3.0).add(x, -1.0));
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_NEAR(s.primal[x], 2.0, 1e-3);  // analytic center of the face
  const auto tb = tie_break(p, s.objective_value, 1e-8);
  ASSERT_EQ(tb.status, SolveStatus::optimal) << tb.message;
  EXPECT_NEAR(tb.primal[x], 1.0, 1e-4);
  EXPECT_LE(tb.objective_value, s.objective_value + 2e-8);
}

TEST(Conic, TieBreakKeepsUniqueOptimum) {
  ConicProgram p;
  const int x = p.add_variables(2);
  p.set_objective(x, 1.0);
  p.set_objective(x + 1, 1.0);
  p.add_nonnegative(LinExpr(-1.0).add(x, 1.0));
  p.add_nonnegative(LinExpr(-2.0).add(x + 1, 1.0));
  const auto s = solve(p);
  const auto tb = tie_break(p, s.objective_value, 1e-8, &s.primal);
  ASSERT_EQ(tb.status, SolveStatus::optimal);
  EXPECT_NEAR(tb.primal[x], 1.0, 1e-6);
  EXPECT_NEAR(tb.primal[x + 1], 2.0, 1e-6);
}

// Brute-force LP oracle: every vertex of {x in R^3 : G x >= h} is the
// solution of some 3x3 subsystem of active rows.
double vertex_enumeration_min(const Eigen::MatrixXd& G, const Eigen::VectorXd& h, const Eigen::Vector3d& c) {
  double best = std::numeric_limits<double>::infinity();
  const int m = static_cast<int>(G.rows());
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b)
      for (int d = b + 1; d < m; ++d) {
        Eigen::Matrix3d M;
        M << G.row(a), G.row(b), G.row(d);
        Eigen::FullPivLU<Eigen::Matrix3d> lu(M);
        if (!lu.isInvertible()) continue;
        const Eigen::Vector3d v = lu.solve(Eigen::Vector3d(h[a], h[b], h[d]));
        if (((G * v - h).array() >= -1e-9).all()) best = std::min(best, c.dot(v));
      }
  return best;
}

TEST(Conic, RandomLpsMatchVertexEnumeration) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int extra = 4;
    Eigen::MatrixXd G(6 + extra, 3);
    Eigen::VectorXd h(6 + extra);
    G.topRows(3) = Eigen::Matrix3d::Identity();
    G.middleRows(3, 3) = -Eigen::Matrix3d::Identity();
    h.head(6).setConstant(-5.0);
    const Eigen::Vector3d inner(U(rng), U(rng), U(rng));
    for (int r = 0; r < extra; ++r) {
      const Eigen::Vector3d a(U(rng), U(rng), U(rng));
      G.row(6 + r) = a.transpose();
      h[6 + r] = a.dot(inner) - (0.1 + std::abs(U(rng)));
    }
    const Eigen::Vector3d c(U(rng), U(rng), U(rng));

    ConicProgram p;
    p.add_variables(3);
    for (int j = 0; j < 3; ++j) p.set_objective(j, c[j]);
    for (int r = 0; r < G.rows(); ++r) {
      LinExpr e(-h[r]);
      for (int j = 0; j < 3; ++j) e.add(j, G(r, j));
      p.add_nonnegative(std::move(e));
    }
    const auto s = solve(p);
    ASSERT_EQ(s.status, SolveStatus::optimal) << s.message;
    EXPECT_NEAR(s.objective_value, vertex_enumeration_min(G, h, c), 1e-6) << "trial " << trial;
    EXPECT_LE(p.max_violation(s.primal), 1e-7);

    const auto again = solve(p);
    EXPECT_NEAR(again.objective_value, s.objective_value, 2e-8);
    EXPECT_EQ(again.primal, s.primal);  // deterministic
  }
}

}  // namespace
