#pragma once

// Relaxed, adversarially robustified scenario programs for the four tube
// geometries. Every fit expands each nominal sample into its perturbation
// vertices, builds one conic program, solves it, optionally applies the
// minimum-norm tie-break, and reads back the tube and the slacks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scenreach/conic.hpp"
#include "scenreach/core.hpp"
#include "scenreach/error.hpp"

namespace scenreach {

enum class LogdetShape { diagonal, full };

struct FitConfig {
  Geometry geometry = Geometry::ball;
  NormKind p = NormKind::l2;
  /// H_k for ellipsoid_fixed or G_k for zonotope; one matrix shared by all k
  /// or one per timestep. Empty selects default_shapes().
  std::vector<Matrix> shapes;
  LogdetShape logdet_shape = LogdetShape::diagonal;
  double rho = 1.0;
  PerturbationModel perturbation;
  /// Defaults to the geometry's natural proxy; balls also accept ball_volume.
  std::optional<SizeProxy> proxy;
  bool tie_break = true;
  double tol = conic::kDefaultTol;
  std::size_t max_rows = 10'000'000;
};

struct SolverDiagnostics {
  std::string status;
  std::string message;
  int newton_steps = 0;
  double gap = 0.0;
  double max_violation = 0.0;
  bool tie_break_applied = false;
  std::size_t constraint_rows = 0;  // |K| = N (T+1) |M|
  int num_vars = 0;
  std::string shape_note;
};

struct FitResult {
  TubeParams tube;
  std::vector<double> slacks;
  double objective_value = 0.0;
  std::vector<double> per_trajectory_worst_margin;
  SolverDiagnostics diagnostics;
};

struct ShapeSet {
  std::vector<Matrix> matrices;  // one per timestep
  std::vector<int> fallback_steps;
  std::string note;
};

/// Data-driven H_k (whitening) or G_k ([I | principal directions]) per timestep.
inline ShapeSet default_shapes(const TrajectoryBatch& batch, Geometry geometry, int generators = 0) {
  if (geometry != Geometry::ellipsoid_fixed && geometry != Geometry::zonotope)
    throw InputError("default shapes exist only for ellipsoid_fixed and zonotope");
  const int N = batch.size(), n = batch.state_dim(), T = batch.horizon();
  if (N < 2) throw InputError("default shapes need at least two trajectories");
  const int m = generators == 0 ? 2 * n : generators;
  if (geometry == Geometry::zonotope && (m < n || m > 2 * n))
    throw InputError("default zonotope generator count must lie in [n_x, 2 n_x]");

  ShapeSet out;
  for (int k = 0; k <= T; ++k) {
    Vector mean = Vector::Zero(n);
    for (const auto& tr : batch) mean += tr.state(k);
    mean /= N;
    Matrix cov = Matrix::Zero(n, n);
    for (const auto& tr : batch) {
      const Vector d = tr.state(k) - mean;
      cov.noalias() += d * d.transpose();
    }
    cov /= (N - 1);
    const Matrix reg = cov + 1e-6 * Matrix::Identity(n, n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(reg);
    const Vector lam = eig.eigenvalues();
    const bool singular = !(cov.trace() > 1e-12) || eig.info() != Eigen::Success || !(lam.minCoeff() > 0.0) ||
                          lam.maxCoeff() / lam.minCoeff() > 1e12;

    if (geometry == Geometry::ellipsoid_fixed) {
      if (singular) {
        out.fallback_steps.push_back(k);
        out.matrices.push_back(Matrix::Identity(n, n));
        continue;
      }
      const Matrix& V = eig.eigenvectors();
      Matrix H = V * lam.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
      out.matrices.push_back(0.5 * (H + H.transpose()));
    } else {
      Matrix G(n, m);
      G.leftCols(n).setIdentity();
      if (singular) out.fallback_steps.push_back(k);
      for (int c = 0; c < m - n; ++c) {
        // eigenvalues ascend; take the largest first
        Vector v = singular ? Vector(Matrix::Identity(n, n).col(c)) : Vector(eig.eigenvectors().col(n - 1 - c));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        G.col(n + c) = v;
      }
      out.matrices.push_back(std::move(G));
    }
  }
  if (!out.fallback_steps.empty()) {
    std::ostringstream os;
    os << "covariance numerically singular at " << out.fallback_steps.size()
       << " timestep(s); identity fallback used";
    out.note = os.str();
  }
  return out;
}

namespace detail {

// Newton budget per tie-break attempt (reweighted slab, then plain slab);
// if both run out the plain optimum is kept.
inline constexpr int kTieBreakSteps = 300;

/// Program under construction together with a strictly feasible start.
class ProgramBuilder {
 public:
  int add(int count, double init) {
    const int first = prog.add_variables(count);
    start.insert(start.end(), static_cast<std::size_t>(count), init);
    return first;
  }
  void set_start(int var, double v) { start[static_cast<std::size_t>(var)] = v; }
  double start_of(int var) const { return start[static_cast<std::size_t>(var)]; }
  Vector start_vector() const { return Eigen::Map<const Vector>(start.data(), static_cast<Eigen::Index>(start.size())); }

  conic::ConicProgram prog;
  std::vector<double> start;
};

/// Vertex-expanded samples: point (i, k, j) in i-major, then k, then j order.
struct Expansion {
  std::vector<Vector> offsets;
  int N = 0, T = 0, n = 0;
  int per_step() const { return static_cast<int>(offsets.size()); }
};

inline Expansion expand(const TrajectoryBatch& batch, const FitConfig& cfg) {
  Expansion e;
  e.N = batch.size();
  e.T = batch.horizon();
  e.n = batch.state_dim();
  e.offsets = cfg.perturbation.offsets_for(e.n);
  const double rows = static_cast<double>(e.N) * (e.T + 1) * static_cast<double>(e.offsets.size());
  if (rows > static_cast<double>(cfg.max_rows))
    throw ConfigError("vertex-expanded constraint count " + std::to_string(static_cast<long long>(rows)) +
                      " exceeds the memory guard of " + std::to_string(cfg.max_rows));
  return e;
}

inline void check_config(const TrajectoryBatch& batch, const FitConfig& cfg) {
  if (!(cfg.rho > 0.0) || !std::isfinite(cfg.rho)) throw InputError("rho must be a positive finite number");
  if (!(cfg.tol > 0.0)) throw InputError("solver tolerance must be positive");
  (void)batch;
}

inline std::vector<Vector> step_means(const TrajectoryBatch& batch) {
  std::vector<Vector> means;
  for (int k = 0; k <= batch.horizon(); ++k) {
    Vector m = Vector::Zero(batch.state_dim());
    for (const auto& tr : batch) m += tr.state(k);
    means.push_back(m / batch.size());
  }
  return means;
}

inline std::vector<Matrix> resolve_shapes(const TrajectoryBatch& batch, const FitConfig& cfg, std::string& note) {
  const int T = batch.horizon();
  if (cfg.shapes.empty()) {
    auto s = default_shapes(batch, cfg.geometry);
    note = s.note;
    return std::move(s.matrices);
  }
  if (cfg.shapes.size() == 1) return std::vector<Matrix>(static_cast<std::size_t>(T + 1), cfg.shapes.front());
  if (static_cast<int>(cfg.shapes.size()) != T + 1)
    throw InputError("shape list must hold one matrix or one per timestep");
  return cfg.shapes;
}

/// Solves, tie-breaks, and fills diagnostics. Returns the chosen primal.
inline Vector solve_fit(ProgramBuilder& b, const FitConfig& cfg, std::size_t rows, SolverDiagnostics& diag) {
  conic::SolveOptions opts;
  opts.tol = cfg.tol;
  opts.initial_point = b.start_vector();
  const auto sol = conic::solve(b.prog, opts);
  diag.status = conic::to_string(sol.status);
  diag.message = sol.message;
  diag.newton_steps = sol.newton_steps;
  diag.gap = sol.gap;
  diag.constraint_rows = rows;
  diag.num_vars = b.prog.num_vars();
  if (sol.status != conic::SolveStatus::optimal) {
    std::ostringstream os;
    os << "scenario program solve failed (" << diag.status << ")";
    if (!sol.message.empty()) os << ": " << sol.message;
    throw NumericalError(os.str());
  }
  Vector x = sol.primal;
  if (cfg.tie_break) {
    auto tb = conic::tie_break(b.prog, sol.objective_value, cfg.tol, &sol.primal, kTieBreakSteps, sol.gap);
    diag.newton_steps += tb.newton_steps;
    if (tb.status != conic::SolveStatus::optimal) {
      tb = conic::tie_break(b.prog, sol.objective_value, cfg.tol, &sol.primal, kTieBreakSteps, 0.0);
      diag.newton_steps += tb.newton_steps;
    }
    const double budget = sol.objective_value + 2.0 * cfg.tol * std::max(1.0, std::abs(sol.objective_value));
    if (tb.status == conic::SolveStatus::optimal && tb.objective_value <= budget) {
      x = tb.primal;
      diag.tie_break_applied = true;
    } else {
      diag.message = std::string("tie-break skipped (") + conic::to_string(tb.status) + (tb.message.empty() ? "" : ": " + tb.message) + ")";
    }
  }
  diag.max_violation = b.prog.max_violation(x);
  return x;
}

/// Slacks at their optimal values for the fitted tube, and the matching objective.
inline void finish(FitResult& r, const TrajectoryBatch& batch, const std::vector<Vector>& offsets, double slack_weight,
                   double size_total) {
  const int N = batch.size();
  r.slacks.resize(static_cast<std::size_t>(N));
  r.per_trajectory_worst_margin.resize(static_cast<std::size_t>(N));
  double slack_sum = 0.0;
  for (int i = 0; i < N; ++i) {
    const double m = worst_vertex_margin(r.tube, batch[i], offsets);
    r.per_trajectory_worst_margin[static_cast<std::size_t>(i)] = m;
    r.slacks[static_cast<std::size_t>(i)] = std::max(0.0, m);
    slack_sum += std::max(0.0, m);
  }
  r.objective_value = size_total + slack_weight * slack_sum;
}

inline int add_slacks(ProgramBuilder& b, int N) {
  const int xi = b.add(N, 1.0);
  for (int i = 0; i < N; ++i) b.prog.add_nonnegative(conic::LinExpr::variable(xi + i));
  return xi;
}

/// Ball (any p) or fixed-shape ellipsoid; shapes null means a p-ball.
inline FitResult fit_ball_like(const TrajectoryBatch& batch, const FitConfig& cfg, const std::vector<Matrix>* shapes,
                               bool volume, std::string shape_note) {
  check_config(batch, cfg);
  const Expansion e = expand(batch, cfg);
  const int N = e.N, T = e.T, n = e.n, M = e.per_step();
  const NormKind p = shapes ? NormKind::l2 : cfg.p;
  const auto means = step_means(batch);

  ProgramBuilder b;
  std::vector<int> cvar(static_cast<std::size_t>(T + 1)), rvar(static_cast<std::size_t>(T + 1));
  std::vector<int> decision;
  for (int k = 0; k <= T; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    cvar[kk] = b.add(n, 0.0);
    rvar[kk] = b.add(1, 0.0);
    for (int d = 0; d < n; ++d) {
      b.set_start(cvar[kk] + d, means[kk][d]);
      decision.push_back(cvar[kk] + d);
    }
    decision.push_back(rvar[kk]);
  }
  const int xi = add_slacks(b, N);
  const double weight = (T + 1) * cfg.rho;

  // r_k >= max over rows of the scaled distance to the start center, plus one
  std::vector<double> reach(static_cast<std::size_t>(T + 1), 0.0);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k <= T; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      for (const auto& o : e.offsets) {
        const Vector dx = batch[i].state(k) + o - means[kk];
        const double dist = shapes ? ((*shapes)[kk] * dx).norm() : norm_of(p, dx) + (p == NormKind::l1 ? n : 0);
        reach[kk] = std::max(reach[kk], dist);
      }
    }
  for (int k = 0; k <= T; ++k) b.set_start(rvar[static_cast<std::size_t>(k)], reach[static_cast<std::size_t>(k)] + 1.0);

  for (int k = 0; k <= T; ++k) b.prog.add_nonnegative(conic::LinExpr::variable(rvar[static_cast<std::size_t>(k)]));

  for (int i = 0; i < N; ++i)
    for (int k = 0; k <= T; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      for (int j = 0; j < M; ++j) {
        const Vector x = batch[i].state(k) + e.offsets[static_cast<std::size_t>(j)];
        conic::LinExpr bound = conic::LinExpr::variable(rvar[kk]);
        bound.add(xi + i, 1.0);
        if (shapes) {
          const Matrix& H = (*shapes)[kk];
          const Vector hx = H * x;
          std::vector<conic::LinExpr> u;
          for (int d = 0; d < n; ++d) {
            conic::LinExpr row(hx[d]);
            for (int c = 0; c < n; ++c) row.add(cvar[kk] + c, -H(d, c));
            u.push_back(std::move(row));
          }
          b.prog.add_second_order(std::move(bound), std::move(u));
        } else if (p == NormKind::l2) {
          std::vector<conic::LinExpr> u;
          for (int d = 0; d < n; ++d) u.push_back(conic::LinExpr(x[d]).add(cvar[kk] + d, -1.0));
          b.prog.add_second_order(std::move(bound), std::move(u));
        } else if (p == NormKind::linf) {
          for (int d = 0; d < n; ++d)
            for (double s : {1.0, -1.0}) {
              conic::LinExpr row = bound;
              row.add_constant(-s * x[d]).add(cvar[kk] + d, s);
              b.prog.add_nonnegative(std::move(row));
            }
        } else {
          const int v = b.add(n, 0.0);
          conic::LinExpr row = bound;
          for (int d = 0; d < n; ++d) {
            b.set_start(v + d, std::abs(x[d] - means[kk][d]) + 1.0);
            for (double s : {1.0, -1.0})
              b.prog.add_nonnegative(conic::LinExpr(-s * x[d]).add(v + d, 1.0).add(cvar[kk] + d, s));
            row.add(v + d, -1.0);
          }
          b.prog.add_nonnegative(std::move(row));
        }
      }
    }

  const double vol = unit_ball_volume(p, n);
  for (int k = 0; k <= T; ++k) {
    const int r = rvar[static_cast<std::size_t>(k)];
    if (volume && n > 1) {
      const int u = b.add(1, std::pow(b.start_of(r) + 1.0, n));
      b.prog.add_power(conic::LinExpr::variable(u), conic::LinExpr(1.0), conic::LinExpr::variable(r), 1.0 / n);
      b.prog.set_barrier_weight(b.prog.num_blocks() - 1, static_cast<double>(N) * M);
      b.prog.set_objective(u, vol);
    } else {
      b.prog.set_objective(r, volume ? vol : 1.0);
    }
  }
  for (int i = 0; i < N; ++i) b.prog.set_objective(xi + i, weight);
  b.prog.set_decision_variables(decision);

  FitResult r{TubeParams::ball(p, {BallStep{Vector::Zero(n), 0.0}}), {}, 0.0, {}, {}};
  r.diagnostics.shape_note = std::move(shape_note);
  const std::size_t rows = static_cast<std::size_t>(N) * static_cast<std::size_t>(T + 1) * static_cast<std::size_t>(M);
  const Vector x = solve_fit(b, cfg, rows, r.diagnostics);

  double size_total = 0.0;
  if (shapes) {
    std::vector<EllipsoidStep> steps;
    for (int k = 0; k <= T; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      steps.push_back({(*shapes)[kk], x.segment(cvar[kk], n), std::max(0.0, x[rvar[kk]])});
      size_total += steps.back().scale;
    }
    r.tube = TubeParams::ellipsoid_fixed(std::move(steps));
  } else {
    std::vector<BallStep> steps;
    for (int k = 0; k <= T; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      steps.push_back({x.segment(cvar[kk], n), std::max(0.0, x[rvar[kk]])});
      size_total += volume ? vol * std::pow(steps.back().radius, n) : steps.back().radius;
    }
    r.tube = TubeParams::ball(p, std::move(steps));
  }
  finish(r, batch, e.offsets, weight, size_total);
  return r;
}

}  // namespace detail

inline FitResult fit_ball_radius(const TrajectoryBatch& batch, const FitConfig& cfg) {
  return detail::fit_ball_like(batch, cfg, nullptr, false, {});
}

/// Objective Vol(B_p) r_k^{n_x} per timestep, through a power-cone epigraph.
inline FitResult fit_ball_volume(const TrajectoryBatch& batch, const FitConfig& cfg) {
  return detail::fit_ball_like(batch, cfg, nullptr, true, {});
}

inline FitResult fit_ellipsoid_fixed(const TrajectoryBatch& batch, const FitConfig& cfg) {
  std::string note;
  const auto H = detail::resolve_shapes(batch, cfg, note);
  for (const auto& h : H) {
    if (h.rows() != batch.state_dim()) throw InputError("shape matrix dimension does not match the state");
    detail::require_spd(h, "ellipsoid shape matrix");
  }
  return detail::fit_ball_like(batch, cfg, &H, false, std::move(note));
}

/// Diagonal C_k: minimizes sum_k -log det C_k with exponential-cone epigraphs.
inline FitResult fit_ellipsoid_logdet(const TrajectoryBatch& batch, const FitConfig& cfg) {
  using conic::LinExpr;
  detail::check_config(batch, cfg);
  if (cfg.logdet_shape != LogdetShape::diagonal)
    throw ConfigError("full-matrix log-det ellipsoids are disabled; use the diagonal shape mode");
  const auto e = detail::expand(batch, cfg);
  const int N = e.N, T = e.T, n = e.n, M = e.per_step();

  // an axis on which every vertex coincides lets c_jj grow without bound
  std::vector<Vector> lo, hi;
  for (int k = 0; k <= T; ++k) {
    Vector l = Vector::Constant(n, std::numeric_limits<double>::infinity()), h = -l;
    for (const auto& tr : batch)
      for (const auto& o : e.offsets) {
        const Vector x = tr.state(k) + o;
        l = l.cwiseMin(x);
        h = h.cwiseMax(x);
      }
    for (int j = 0; j < n; ++j)
      if (!(h[j] - l[j] > 1e-12 * (1.0 + std::abs(h[j]))))
        throw InputError("log-det objective is unbounded: all samples coincide along axis " + std::to_string(j) +
                         " at timestep " + std::to_string(k));
    lo.push_back(l);
    hi.push_back(h);
  }

  detail::ProgramBuilder b;
  std::vector<int> cvar, bvar, tvar;
  std::vector<int> decision;
  for (int k = 0; k <= T; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    cvar.push_back(b.add(n, 0.0));
    bvar.push_back(b.add(n, 0.0));
    tvar.push_back(b.add(n, 0.0));
    for (int j = 0; j < n; ++j) {
      // start: C = diag(1 / (n * halfwidth + 1)) centred on the box midpoint, so ||C x + b|| < 1
      const double mid = 0.5 * (lo[kk][j] + hi[kk][j]);
      const double c0 = 1.0 / (n * 0.5 * (hi[kk][j] - lo[kk][j]) + 1.0);
      b.set_start(cvar[kk] + j, c0);
      b.set_start(bvar[kk] + j, -c0 * mid);
      b.set_start(tvar[kk] + j, -std::log(c0) + 1.0);
      b.prog.add_exponential(LinExpr::variable(tvar[kk] + j, -1.0), LinExpr(1.0), LinExpr::variable(cvar[kk] + j));
      b.prog.set_objective(tvar[kk] + j, 1.0);
    }
    for (int j = 0; j < n; ++j) decision.push_back(cvar[kk] + j);
    for (int j = 0; j < n; ++j) decision.push_back(bvar[kk] + j);
  }
  const int xi = detail::add_slacks(b, N);
  const double weight = (T + 1) * cfg.rho;
  for (int i = 0; i < N; ++i) b.prog.set_objective(xi + i, weight);

  for (int i = 0; i < N; ++i)
    for (int k = 0; k <= T; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      for (const auto& o : e.offsets) {
        const Vector x = batch[i].state(k) + o;
        std::vector<LinExpr> u;
        for (int j = 0; j < n; ++j) u.push_back(LinExpr::variable(cvar[kk] + j, x[j]).add(bvar[kk] + j, 1.0));
        b.prog.add_second_order(LinExpr(1.0).add(xi + i, 1.0), std::move(u));
      }
    }
  b.prog.set_decision_variables(decision);

  FitResult r{TubeParams::ball(NormKind::l2, {BallStep{Vector::Zero(n), 0.0}}), {}, 0.0, {}, {}};
  const std::size_t rows = static_cast<std::size_t>(N) * static_cast<std::size_t>(T + 1) * static_cast<std::size_t>(M);
  const Vector x = detail::solve_fit(b, cfg, rows, r.diagnostics);

  std::vector<LogdetStep> steps;
  double size_total = 0.0;
  for (int k = 0; k <= T; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const Vector c = x.segment(cvar[kk], n);
    if (!(c.array() > 0.0).all()) throw NumericalError("log-det fit returned a non-positive shape entry");
    steps.push_back({Matrix(c.asDiagonal()), x.segment(bvar[kk], n)});
    size_total -= c.array().log().sum();
  }
  r.tube = TubeParams::ellipsoid_logdet(std::move(steps));
  detail::finish(r, batch, e.offsets, weight, size_total);
  return r;
}

/// LP over centers, half-widths and slacks. The generator weights of each
/// vertex are zeta = G^+ (x - c) + N w with N spanning null(G), so the
/// equality c + G zeta = x holds identically.
inline FitResult fit_zonotope(const TrajectoryBatch& batch, const FitConfig& cfg) {
  using conic::LinExpr;
  detail::check_config(batch, cfg);
  std::string note;
  const auto G = detail::resolve_shapes(batch, cfg, note);
  const auto e = detail::expand(batch, cfg);
  const int N = e.N, T = e.T, n = e.n, M = e.per_step();
  std::vector<detail::ZonotopeCache> cache;
  for (const auto& g : G) {
    if (g.rows() != n) throw InputError("generator matrix row count does not match the state");
    if (!g.allFinite()) throw InputError("generator matrix must be finite");
    cache.push_back(detail::make_zonotope_cache(g));
  }
  const auto means = detail::step_means(batch);

  detail::ProgramBuilder b;
  std::vector<int> cvar, avar;
  std::vector<int> decision;
  for (int k = 0; k <= T; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const int m = static_cast<int>(G[kk].cols());
    cvar.push_back(b.add(n, 0.0));
    avar.push_back(b.add(m, 0.0));
    for (int d = 0; d < n; ++d) {
      b.set_start(cvar[kk] + d, means[kk][d]);
      decision.push_back(cvar[kk] + d);
    }
    for (int j = 0; j < m; ++j) {
      decision.push_back(avar[kk] + j);
      b.prog.add_nonnegative(LinExpr::variable(avar[kk] + j));
      b.prog.set_objective(avar[kk] + j, 1.0);
    }
  }
  const int xi = detail::add_slacks(b, N);
  for (int i = 0; i < N; ++i) b.prog.set_objective(xi + i, cfg.rho);

  std::vector<double> reach(static_cast<std::size_t>(T + 1), 0.0);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k <= T; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const int m = static_cast<int>(G[kk].cols());
      const Matrix& P = cache[kk].pinv;
      const Matrix& Nk = cache[kk].kernel;
      const int q = static_cast<int>(Nk.cols());
      for (const auto& o : e.offsets) {
        // zeta = P (x - c) + N w covers every solution of c + G zeta = x
        const Vector x = batch[i].state(k) + o;
        const Vector px = P * x;
        const int w = b.add(q, 0.0);
        reach[kk] = std::max(reach[kk], (P * (x - means[kk])).lpNorm<Eigen::Infinity>());
        for (int j = 0; j < m; ++j) {
          LinExpr zeta(px[j]);
          for (int d = 0; d < n; ++d) zeta.add(cvar[kk] + d, -P(j, d));
          for (int c = 0; c < q; ++c) zeta.add(w + c, Nk(j, c));
          for (double s : {1.0, -1.0}) {
            LinExpr row = LinExpr::variable(avar[kk] + j).add(xi + i, 1.0);
            row.add_constant(-s * zeta.constant());
            for (const auto& t : zeta.terms()) row.add(t.var, -s * t.coef);
            b.prog.add_nonnegative(std::move(row));
          }
        }
      }
    }
  for (int k = 0; k <= T; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    for (int j = 0; j < G[kk].cols(); ++j) b.set_start(avar[kk] + j, reach[kk] + 1.0);
  }
  b.prog.set_decision_variables(decision);

  FitResult r{TubeParams::ball(NormKind::l2, {BallStep{Vector::Zero(n), 0.0}}), {}, 0.0, {}, {}};
  r.diagnostics.shape_note = std::move(note);
  const std::size_t rows = static_cast<std::size_t>(N) * static_cast<std::size_t>(T + 1) * static_cast<std::size_t>(M);
  const Vector x = detail::solve_fit(b, cfg, rows, r.diagnostics);

  std::vector<ZonotopeStep> steps;
  double size_total = 0.0;
  for (int k = 0; k <= T; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const Vector a = x.segment(avar[kk], G[kk].cols()).cwiseMax(0.0);
    size_total += a.sum();
    steps.push_back({G[kk], x.segment(cvar[kk], n), a});
  }
  r.tube = TubeParams::zonotope(std::move(steps));
  detail::finish(r, batch, e.offsets, cfg.rho, size_total);
  return r;
}

/// Dispatches on cfg.geometry and cfg.proxy.
inline FitResult fit(const TrajectoryBatch& batch, const FitConfig& cfg) {
  const SizeProxy proxy = cfg.proxy.value_or(default_proxy(cfg.geometry));
  switch (cfg.geometry) {
    case Geometry::ball:
      if (proxy == SizeProxy::radius) return fit_ball_radius(batch, cfg);
      if (proxy == SizeProxy::ball_volume) return fit_ball_volume(batch, cfg);
      break;
    case Geometry::ellipsoid_fixed:
      if (proxy == SizeProxy::scale) return fit_ellipsoid_fixed(batch, cfg);
      break;
    case Geometry::ellipsoid_logdet:
      if (proxy == SizeProxy::neg_logdet) return fit_ellipsoid_logdet(batch, cfg);
      break;
    case Geometry::zonotope:
      if (proxy == SizeProxy::halfwidth_sum) return fit_zonotope(batch, cfg);
      break;
  }
  throw InputError("size proxy is not compatible with the selected geometry");
}

}  // namespace scenreach
