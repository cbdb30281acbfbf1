#pragma once

// Domain types shared by every module: trajectories, perturbation models,
// tube parameterizations, and the constraint margin g_k that defines
// membership of a state in the k-th set of a tube.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "scenreach/conic.hpp"
#include "scenreach/error.hpp"

namespace scenreach {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// States x_0..x_T stored column-wise (n_x rows, T+1 columns).
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(Matrix states) : states_(std::move(states)) {
    if (states_.rows() < 1 || states_.cols() < 1)
      throw InputError("trajectory needs at least one state of dimension >= 1");
    if (!states_.allFinite()) throw InputError("trajectory contains non-finite entries");
  }

  int horizon() const { return static_cast<int>(states_.cols()) - 1; }
  int length() const { return static_cast<int>(states_.cols()); }
  int state_dim() const { return static_cast<int>(states_.rows()); }
  auto state(int k) const { return states_.col(k); }
  const Matrix& states() const { return states_; }

  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.states_.rows() == b.states_.rows() && a.states_.cols() == b.states_.cols() &&
           a.states_ == b.states_;
  }

 private:
  Matrix states_;
};

class TrajectoryBatch {
 public:
  TrajectoryBatch() = default;
  explicit TrajectoryBatch(std::vector<Trajectory> trajectories, std::string source = {})
      : trajectories_(std::move(trajectories)), source_(std::move(source)) {
    if (trajectories_.empty()) throw InputError("trajectory batch must not be empty");
    const int T = trajectories_.front().horizon();
    const int n = trajectories_.front().state_dim();
    for (const auto& tr : trajectories_)
      if (tr.horizon() != T || tr.state_dim() != n)
        throw InputError("all trajectories in a batch must share horizon and state dimension");
  }

  int size() const { return static_cast<int>(trajectories_.size()); }
  int horizon() const { return trajectories_.front().horizon(); }
  int state_dim() const { return trajectories_.front().state_dim(); }
  const Trajectory& operator[](int i) const { return trajectories_[static_cast<std::size_t>(i)]; }
  auto begin() const { return trajectories_.begin(); }
  auto end() const { return trajectories_.end(); }
  const std::string& source() const { return source_; }

  friend bool operator==(const TrajectoryBatch& a, const TrajectoryBatch& b) {
    return a.trajectories_ == b.trajectories_;
  }

 private:
  std::vector<Trajectory> trajectories_;
  std::string source_;
};

// ---------------------------------------------------------------------------
// Perturbations

enum class PerturbationKind { none, box, vertex_list };

/// Largest state dimension for which box vertices are enumerated explicitly.
constexpr int kMaxBoxDim = 20;

class PerturbationModel {
 public:
  PerturbationModel() = default;

  static PerturbationModel none() { return {}; }

  /// Axis-aligned box with per-axis radii; R is the infinity-norm radius.
  static PerturbationModel box(Vector radii) {
    if (radii.size() < 1) throw InputError("box perturbation needs at least one axis");
    if (!radii.allFinite() || (radii.array() < 0.0).any())
      throw InputError("box perturbation radii must be finite and nonnegative");
    PerturbationModel m;
    m.kind_ = PerturbationKind::box;
    m.radius_ = radii.maxCoeff();
    m.radii_ = std::move(radii);
    return m;
  }

  static PerturbationModel uniform_box(int dim, double gamma) {
    return box(Vector::Constant(dim, gamma));
  }

  /// Explicit polytope vertices given as offsets from the nominal sample.
  /// The convex hull of the offsets must contain the origin.
  static PerturbationModel vertex_list(std::vector<Vector> offsets, double metric_radius);

  PerturbationKind kind() const { return kind_; }
  double metric_radius() const { return radius_; }
  const Vector& radii() const { return radii_; }
  const std::vector<Vector>& offsets() const { return offsets_; }

  /// Offsets applied to a state of dimension n, in deterministic order.
  /// Box signs run lexicographically with '-' before '+', first axis slowest.
  std::vector<Vector> offsets_for(int n) const {
    switch (kind_) {
      case PerturbationKind::none: return {Vector::Zero(n)};
      case PerturbationKind::box: {
        if (radii_.size() != n) throw InputError("box perturbation dimension does not match the state");
        if (n > kMaxBoxDim)
          throw ConfigError("box perturbation in dimension " + std::to_string(n) +
                            " would need 2^n vertices; supply a vertex list instead");
        const std::size_t count = std::size_t{1} << n;
        std::vector<Vector> out;
        out.reserve(count);
        for (std::size_t mask = 0; mask < count; ++mask) {
          Vector o(n);
          for (int j = 0; j < n; ++j) {
            const bool plus = (mask >> (n - 1 - j)) & 1U;
            o[j] = plus ? radii_[j] : -radii_[j];
          }
          out.push_back(std::move(o));
        }
        return out;
      }
      case PerturbationKind::vertex_list:
        for (const auto& o : offsets_)
          if (o.size() != n) throw InputError("vertex offset dimension does not match the state");
        return offsets_;
    }
    return {};
  }

 private:
  PerturbationKind kind_ = PerturbationKind::none;
  double radius_ = 0.0;
  Vector radii_;
  std::vector<Vector> offsets_;
};

inline PerturbationModel PerturbationModel::vertex_list(std::vector<Vector> offsets, double metric_radius) {
  if (offsets.empty()) throw InputError("vertex list must not be empty");
  const auto n = offsets.front().size();
  bool has_zero = false;
  for (const auto& o : offsets) {
    if (o.size() != n || n < 1) throw InputError("vertex offsets must share a positive dimension");
    if (!o.allFinite()) throw InputError("vertex offsets must be finite");
    if (o.isZero(0.0)) has_zero = true;
  }
  if (!(metric_radius >= 0.0) || !std::isfinite(metric_radius))
    throw InputError("metric radius must be finite and nonnegative");
  if (!has_zero) {
    // min ||sum_i l_i o_i|| over the simplex; zero iff the hull contains the origin
    conic::ConicProgram p;
    const int m = static_cast<int>(offsets.size());
    const int l0 = p.add_variables(m);
    const int tau = p.add_variables(1);
    p.set_objective(tau, 1.0);
    conic::LinExpr sum(-1.0);
    for (int i = 0; i < m; ++i) {
      p.add_nonnegative(conic::LinExpr::variable(l0 + i));
      sum.add(l0 + i, 1.0);
    }
    p.add_equality(std::move(sum));
    std::vector<conic::LinExpr> rows;
    for (Eigen::Index j = 0; j < n; ++j) {
      conic::LinExpr e;
      for (int i = 0; i < m; ++i) e.add(l0 + i, offsets[static_cast<std::size_t>(i)][j]);
      rows.push_back(std::move(e));
    }
    p.add_second_order(conic::LinExpr::variable(tau), std::move(rows));
    const auto sol = conic::solve(p, 1e-10);
    double scale = 0.0;
    for (const auto& o : offsets) scale = std::max(scale, o.lpNorm<Eigen::Infinity>());
    if (sol.status != conic::SolveStatus::optimal || sol.objective_value > 1e-7 * std::max(1.0, scale))
      throw InputError("convex hull of the vertex offsets must contain the origin");
  }
  PerturbationModel m;
  m.kind_ = PerturbationKind::vertex_list;
  m.radius_ = metric_radius;
  m.offsets_ = std::move(offsets);
  return m;
}

/// The perturbed copies of x_k under model, in the order of offsets_for().
inline std::vector<Vector> perturbation_vertices(const PerturbationModel& model, const Vector& xk) {
  auto pts = model.offsets_for(static_cast<int>(xk.size()));
  for (auto& p : pts) p += xk;
  return pts;
}

// ---------------------------------------------------------------------------
// Tube parameterizations

enum class Geometry { ball, ellipsoid_fixed, ellipsoid_logdet, zonotope };
enum class NormKind { l1, l2, linf };
enum class SizeProxy { radius, scale, halfwidth_sum, ball_volume, neg_logdet };

inline double norm_of(NormKind p, const Vector& v) {
  switch (p) {
    case NormKind::l1: return v.lpNorm<1>();
    case NormKind::l2: return v.norm();
    case NormKind::linf: return v.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

/// Volume of the unit p-norm ball in dimension n.
inline double unit_ball_volume(NormKind p, int n) {
  switch (p) {
    case NormKind::l1: return std::exp(n * std::log(2.0) - std::lgamma(n + 1.0));
    case NormKind::l2: return std::exp(0.5 * n * std::log(std::numbers::pi) - std::lgamma(0.5 * n + 1.0));
    case NormKind::linf: return std::ldexp(1.0, n);
  }
  return 0.0;
}

struct BallStep {
  Vector center;
  double radius = 0.0;
};

struct EllipsoidStep {
  Matrix shape;  // H_k, symmetric positive definite
  Vector center;
  double scale = 0.0;
};

struct LogdetStep {
  Matrix C;  // symmetric positive definite
  Vector offset;
};

struct ZonotopeStep {
  Matrix generators;  // n_x x m, full row rank
  Vector center;
  Vector halfwidths;  // m entries, nonnegative
};

namespace detail {

inline void require_spd(const Matrix& M, const char* what) {
  if (M.rows() != M.cols() || M.rows() < 1) throw InputError(std::string(what) + " must be square");
  if (!M.allFinite()) throw InputError(std::string(what) + " must be finite");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if (!(M - M.transpose()).isZero(1e-10 * scale)) throw InputError(std::string(what) + " must be symmetric");
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success) throw InputError(std::string(what) + " must be positive definite");
}

/// Zonotope step with the factorizations the margin LP needs.
struct ZonotopeCache {
  Matrix pinv;    // m x n, right inverse of G
  Matrix kernel;  // m x (m - n), orthonormal basis of null(G)
};

inline ZonotopeCache make_zonotope_cache(const Matrix& G) {
  const auto n = G.rows(), m = G.cols();
  if (m < n) throw InputError("zonotope needs at least as many generators as state dimensions");
  Eigen::FullPivLU<Matrix> lu(G);
  lu.setThreshold(1e-10);
  if (lu.rank() < n) throw InputError("zonotope generator matrix must have full row rank");
  ZonotopeCache c;
  c.pinv = G.transpose() * (G * G.transpose()).ldlt().solve(Matrix::Identity(n, n));
  // orthonormal null-space basis from the complete orthogonal decomposition of G'
  Eigen::HouseholderQR<Matrix> qr(G.transpose());
  const Matrix Q = qr.householderQ() * Matrix::Identity(m, m);
  c.kernel = Q.rightCols(m - n);
  return c;
}

}  // namespace detail

class TubeParams {
 public:
  struct BallTube {
    NormKind p;
    std::vector<BallStep> steps;
  };
  struct EllipsoidTube {
    std::vector<EllipsoidStep> steps;
  };
  struct LogdetTube {
    std::vector<LogdetStep> steps;
  };
  struct ZonotopeTube {
    std::vector<ZonotopeStep> steps;
    std::vector<detail::ZonotopeCache> cache;
  };

  static TubeParams ball(NormKind p, std::vector<BallStep> steps) {
    check_count(steps.size());
    const auto n = steps.front().center.size();
    for (const auto& s : steps) {
      if (s.center.size() != n || n < 1) throw InputError("ball centers must share a positive dimension");
      if (!(s.radius >= 0.0) || !std::isfinite(s.radius) || !s.center.allFinite())
        throw InputError("ball radius must be finite and nonnegative");
    }
    return TubeParams(BallTube{p, std::move(steps)});
  }

  static TubeParams ellipsoid_fixed(std::vector<EllipsoidStep> steps) {
    check_count(steps.size());
    const auto n = steps.front().center.size();
    for (const auto& s : steps) {
      if (s.center.size() != n || n < 1 || s.shape.rows() != n)
        throw InputError("ellipsoid shapes and centers must share a positive dimension");
      detail::require_spd(s.shape, "ellipsoid shape matrix");
      if (!(s.scale >= 0.0) || !std::isfinite(s.scale) || !s.center.allFinite())
        throw InputError("ellipsoid scale must be finite and nonnegative");
    }
    return TubeParams(EllipsoidTube{std::move(steps)});
  }

  static TubeParams ellipsoid_logdet(std::vector<LogdetStep> steps) {
    check_count(steps.size());
    const auto n = steps.front().offset.size();
    for (const auto& s : steps) {
      if (s.offset.size() != n || n < 1 || s.C.rows() != n)
        throw InputError("ellipsoid matrices and offsets must share a positive dimension");
      detail::require_spd(s.C, "ellipsoid matrix C");
      if (!s.offset.allFinite()) throw InputError("ellipsoid offset must be finite");
    }
    return TubeParams(LogdetTube{std::move(steps)});
  }

  static TubeParams zonotope(std::vector<ZonotopeStep> steps) {
    check_count(steps.size());
    const auto n = steps.front().center.size();
    std::vector<detail::ZonotopeCache> cache;
    cache.reserve(steps.size());
    for (const auto& s : steps) {
      if (s.center.size() != n || n < 1 || s.generators.rows() != n)
        throw InputError("zonotope generators and centers must share a positive dimension");
      if (s.halfwidths.size() != s.generators.cols())
        throw InputError("zonotope needs one half-width per generator");
      if (!s.generators.allFinite() || !s.center.allFinite() || !s.halfwidths.allFinite() ||
          (s.halfwidths.array() < 0.0).any())
        throw InputError("zonotope half-widths must be finite and nonnegative");
      cache.push_back(detail::make_zonotope_cache(s.generators));
    }
    return TubeParams(ZonotopeTube{std::move(steps), std::move(cache)});
  }

  Geometry geometry() const {
    switch (data_.index()) {
      case 0: return Geometry::ball;
      case 1: return Geometry::ellipsoid_fixed;
      case 2: return Geometry::ellipsoid_logdet;
      default: return Geometry::zonotope;
    }
  }

  int horizon() const {
    return std::visit([](const auto& t) { return static_cast<int>(t.steps.size()) - 1; }, data_);
  }

  int state_dim() const {
    switch (geometry()) {
      case Geometry::ball: return static_cast<int>(as_ball().steps.front().center.size());
      case Geometry::ellipsoid_fixed: return static_cast<int>(as_ellipsoid().steps.front().center.size());
      case Geometry::ellipsoid_logdet: return static_cast<int>(as_logdet().steps.front().offset.size());
      case Geometry::zonotope: return static_cast<int>(as_zonotope().steps.front().center.size());
    }
    return 0;
  }

  const BallTube& as_ball() const { return std::get<BallTube>(data_); }
  const EllipsoidTube& as_ellipsoid() const { return std::get<EllipsoidTube>(data_); }
  const LogdetTube& as_logdet() const { return std::get<LogdetTube>(data_); }
  const ZonotopeTube& as_zonotope() const { return std::get<ZonotopeTube>(data_); }

 private:
  using Data = std::variant<BallTube, EllipsoidTube, LogdetTube, ZonotopeTube>;
  explicit TubeParams(Data d) : data_(std::move(d)) {}
  static void check_count(std::size_t n) {
    if (n == 0) throw InputError("a tube needs one parameter block per timestep");
  }
  Data data_;
};

inline SizeProxy default_proxy(Geometry g) {
  switch (g) {
    case Geometry::ball: return SizeProxy::radius;
    case Geometry::ellipsoid_fixed: return SizeProxy::scale;
    case Geometry::ellipsoid_logdet: return SizeProxy::neg_logdet;
    case Geometry::zonotope: return SizeProxy::halfwidth_sum;
  }
  return SizeProxy::radius;
}

// ---------------------------------------------------------------------------
// Margins

namespace detail {

/// min over w of max_j (|zeta0_j + (K w)_j| - a_j) as a small LP solved by
/// a barrier solve; used when vertex enumeration would be too large.
inline double zonotope_margin_lp(const Vector& zeta0, const Matrix& K, const Vector& a) {
  const int m = static_cast<int>(zeta0.size()), q = static_cast<int>(K.cols());
  conic::ConicProgram p;
  const int w0 = p.add_variables(q);
  const int t = p.add_variables(1);
  p.set_objective(t, 1.0);
  for (int j = 0; j < m; ++j)
    for (double s : {1.0, -1.0}) {
      conic::LinExpr e(-s * zeta0[j] + a[j]);
      e.add(t, 1.0);
      for (int c = 0; c < q; ++c) e.add(w0 + c, -s * K(j, c));
      p.add_nonnegative(std::move(e));
    }
  conic::SolveOptions opts;
  opts.tol = 1e-12;
  Vector start = Vector::Zero(q + 1);
  start[t] = ((zeta0.cwiseAbs() - a).maxCoeff()) + 1.0;
  opts.initial_point = start;
  const auto sol = conic::solve(p, opts);
  if (sol.status != conic::SolveStatus::optimal)
    throw NumericalError("zonotope margin LP failed: " + sol.message);
  return sol.objective_value;
}

/// Exact optimum by enumerating vertices of {(w, t) : t >= +-(zeta0 + K w)_j - a_j}.
inline double zonotope_margin_enum(const Vector& zeta0, const Matrix& K, const Vector& a) {
  const int m = static_cast<int>(zeta0.size()), q = static_cast<int>(K.cols());
  const int d = q + 1, rows = 2 * m;
  // row r: [-s K_j, 1] (w, t) >= s zeta0_j - a_j
  Matrix G(rows, d);
  Vector h(rows);
  for (int j = 0; j < m; ++j)
    for (int si = 0; si < 2; ++si) {
      const double s = si == 0 ? 1.0 : -1.0;
      const int r = 2 * j + si;
      G.row(r).head(q) = -s * K.row(j);
      G(r, q) = 1.0;
      h[r] = s * zeta0[j] - a[j];
    }
  const double scale = 1.0 + zeta0.cwiseAbs().maxCoeff() + a.maxCoeff();
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> idx(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) idx[static_cast<std::size_t>(i)] = i;
  Matrix M(d, d);
  Vector rhs(d);
  for (;;) {
    for (int i = 0; i < d; ++i) {
      M.row(i) = G.row(idx[static_cast<std::size_t>(i)]);
      rhs[i] = h[idx[static_cast<std::size_t>(i)]];
    }
    Eigen::PartialPivLU<Matrix> lu(M);
    if (std::abs(lu.determinant()) > 1e-12) {
      const Vector v = lu.solve(rhs);
      if (((G * v - h).array() >= -1e-10 * scale).all()) best = std::min(best, v[q]);
    }
    int i = d - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == rows - d + i) --i;
    if (i < 0) break;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < d; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  return best;
}

inline double binomial_count(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

inline double zonotope_margin(const ZonotopeStep& step, const ZonotopeCache& cache, const Vector& x) {
  const Vector dx = x - step.center;
  const Vector zeta0 = cache.pinv * dx;
  const double resid = (step.generators * zeta0 - dx).lpNorm<Eigen::Infinity>();
  if (resid > 1e-9 * (1.0 + dx.lpNorm<Eigen::Infinity>())) return std::numeric_limits<double>::infinity();
  const Vector& a = step.halfwidths;
  if (cache.kernel.cols() == 0) return (zeta0.cwiseAbs() - a).maxCoeff();
  const int m = static_cast<int>(a.size()), d = static_cast<int>(cache.kernel.cols()) + 1;
  if (binomial_count(2 * m, d) <= 20000.0) {
    const double v = zonotope_margin_enum(zeta0, cache.kernel, a);
    if (std::isfinite(v)) return v;
  }
  return zonotope_margin_lp(zeta0, cache.kernel, a);
}

}  // namespace detail

/// Scalar m with: x_k satisfies the k-th constraint relaxed by xi iff m <= xi.
template <typename Derived>
double margin(const TubeParams& tube, int k, const Eigen::MatrixBase<Derived>& xk) {
  if (k < 0 || k > tube.horizon()) throw InputError("timestep outside the tube horizon");
  if (xk.size() != tube.state_dim()) throw InputError("state dimension does not match the tube");
  const Vector x = xk;
  const auto kk = static_cast<std::size_t>(k);
  switch (tube.geometry()) {
    case Geometry::ball: {
      const auto& t = tube.as_ball();
      return norm_of(t.p, x - t.steps[kk].center) - t.steps[kk].radius;
    }
    case Geometry::ellipsoid_fixed: {
      const auto& s = tube.as_ellipsoid().steps[kk];
      return (s.shape * (x - s.center)).norm() - s.scale;
    }
    case Geometry::ellipsoid_logdet: {
      const auto& s = tube.as_logdet().steps[kk];
      return (s.C * x + s.offset).norm() - 1.0;
    }
    case Geometry::zonotope: {
      const auto& z = tube.as_zonotope();
      return detail::zonotope_margin(z.steps[kk], z.cache[kk], x);
    }
  }
  return 0.0;
}

inline void check_compatible(const TubeParams& tube, const Trajectory& x) {
  if (x.horizon() != tube.horizon() || x.state_dim() != tube.state_dim())
    throw InputError("trajectory horizon/dimension does not match the tube");
}

/// max_k margin(tube, k, x_k); the trajectory lies in the tube iff this is <= 0.
inline double trajectory_margin(const TubeParams& tube, const Trajectory& x) {
  check_compatible(tube, x);
  double worst = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= tube.horizon(); ++k) worst = std::max(worst, margin(tube, k, x.state(k)));
  return worst;
}

/// max over timesteps and perturbation vertices of the margin.
inline double worst_vertex_margin(const TubeParams& tube, const Trajectory& x, const std::vector<Vector>& offsets) {
  check_compatible(tube, x);
  double worst = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= tube.horizon(); ++k) {
    const Vector xk = x.state(k);
    for (const auto& o : offsets) worst = std::max(worst, margin(tube, k, xk + o));
  }
  return worst;
}

inline double worst_vertex_margin(const TubeParams& tube, const Trajectory& x, const PerturbationModel& model) {
  return worst_vertex_margin(tube, x, model.offsets_for(x.state_dim()));
}

// ---------------------------------------------------------------------------
// Size proxies

inline double size_proxy(const TubeParams& tube, int k, SizeProxy proxy) {
  if (k < 0 || k > tube.horizon()) throw InputError("timestep outside the tube horizon");
  const auto kk = static_cast<std::size_t>(k);
  const Geometry g = tube.geometry();
  switch (proxy) {
    case SizeProxy::radius:
      if (g == Geometry::ball) return tube.as_ball().steps[kk].radius;
      break;
    case SizeProxy::ball_volume:
      if (g == Geometry::ball) {
        const auto& t = tube.as_ball();
        const int n = tube.state_dim();
        return unit_ball_volume(t.p, n) * std::pow(t.steps[kk].radius, n);
      }
      break;
    case SizeProxy::scale:
      if (g == Geometry::ellipsoid_fixed) return tube.as_ellipsoid().steps[kk].scale;
      break;
    case SizeProxy::halfwidth_sum:
      if (g == Geometry::zonotope) return tube.as_zonotope().steps[kk].halfwidths.sum();
      break;
    case SizeProxy::neg_logdet:
      if (g == Geometry::ellipsoid_logdet) {
        Eigen::LLT<Matrix> llt(tube.as_logdet().steps[kk].C);
        return -2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      }
      break;
  }
  throw InputError("size proxy is not defined for this tube geometry");
}

struct SizeReport {
  std::vector<double> per_k;
  double total = 0.0;
};

inline SizeReport size_report(const TubeParams& tube, SizeProxy proxy) {
  SizeReport r;
  for (int k = 0; k <= tube.horizon(); ++k) {
    r.per_k.push_back(size_proxy(tube, k, proxy));
    r.total += r.per_k.back();
  }
  return r;
}

}  // namespace scenreach
