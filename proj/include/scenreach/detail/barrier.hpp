#pragma once

// Primal path-following barrier method behind conic::solve.
//
// Each cone contributes its standard logarithmic barrier; the centering
// problems  min t*c'x + F(Ax + b)  s.t.  Ex = f  are solved by damped Newton
// steps on the quasi-definite KKT system, factored with a sparse LDL^T whose
// symbolic analysis is done once per program. A phase I program with a
// shared shift variable supplies a strictly feasible start when the caller
// does not.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace scenreach::conic {
namespace detail {

inline double cone_degree(ConeKind kind) {
  switch (kind) {
    case ConeKind::nonnegative: return 1.0;
    case ConeKind::second_order: return 2.0;
    case ConeKind::exponential:
    case ConeKind::power: return 3.0;
    case ConeKind::zero: return 0.0;
  }
  return 0.0;
}

/// Barrier value, gradient and Hessian (row-major d x d) at s. Returns false
/// when s is not in the interior of the cone. grad/hess may be null.
inline bool cone_barrier(ConeKind kind, double alpha, const double* s, int d, double& value,
                         double* grad, double* hess) {
  switch (kind) {
    case ConeKind::nonnegative: {
      const double v = s[0];
      if (!(v > 0.0)) return false;
      value = -std::log(v);
      if (grad) grad[0] = -1.0 / v;
      if (hess) hess[0] = 1.0 / (v * v);
      return true;
    }
    case ConeKind::second_order: {
      const double t = s[0];
      if (!(t > 0.0)) return false;
      double uu = 0.0;
      for (int i = 1; i < d; ++i) uu += s[i] * s[i];
      const double un = std::sqrt(uu);
      const double q = (t - un) * (t + un);
      if (!(q > 0.0) || !(t > un)) return false;
      value = -std::log(q);
      if (grad) {
        grad[0] = -2.0 * t / q;
        for (int i = 1; i < d; ++i) grad[i] = 2.0 * s[i] / q;
        if (hess) {
          for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) hess[i * d + j] = grad[i] * grad[j];
          hess[0] -= 2.0 / q;
          for (int i = 1; i < d; ++i) hess[i * d + i] += 2.0 / q;
        }
      }
      return true;
    }
    case ConeKind::exponential: {
      const double x = s[0], y = s[1], z = s[2];
      if (!(y > 0.0) || !(z > 0.0)) return false;
      const double lzy = std::log(z / y);
      const double psi = y * lzy - x;
      if (!(psi > 0.0)) return false;
      value = -std::log(psi) - std::log(y) - std::log(z);
      if (grad) {
        const double dpsi[3] = {-1.0, lzy - 1.0, y / z};
        grad[0] = -dpsi[0] / psi;
        grad[1] = -dpsi[1] / psi - 1.0 / y;
        grad[2] = -dpsi[2] / psi - 1.0 / z;
        if (hess) {
          const double hpsi[9] = {0.0, 0.0, 0.0, 0.0, -1.0 / y, 1.0 / z, 0.0, 1.0 / z, -y / (z * z)};
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
              hess[i * 3 + j] = dpsi[i] * dpsi[j] / (psi * psi) - hpsi[i * 3 + j] / psi;
          hess[4] += 1.0 / (y * y);
          hess[8] += 1.0 / (z * z);
        }
      }
      return true;
    }
    case ConeKind::power: {
      const double x = s[0], y = s[1], z = s[2];
      if (!(x > 0.0) || !(y > 0.0)) return false;
      const double a = alpha;
      const double p = std::exp(2.0 * a * std::log(x) + (2.0 - 2.0 * a) * std::log(y));
      const double phi = p - z * z;
      if (!(phi > 0.0)) return false;
      value = -std::log(phi) - (1.0 - a) * std::log(x) - a * std::log(y);
      if (grad) {
        const double dphi[3] = {2.0 * a * p / x, (2.0 - 2.0 * a) * p / y, -2.0 * z};
        grad[0] = -dphi[0] / phi - (1.0 - a) / x;
        grad[1] = -dphi[1] / phi - a / y;
        grad[2] = -dphi[2] / phi;
        if (hess) {
          const double hxy = 2.0 * a * (2.0 - 2.0 * a) * p / (x * y);
          const double hphi[9] = {2.0 * a * (2.0 * a - 1.0) * p / (x * x), hxy, 0.0,
                                  hxy, (2.0 - 2.0 * a) * (1.0 - 2.0 * a) * p / (y * y), 0.0,
                                  0.0, 0.0, -2.0};
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
              hess[i * 3 + j] = dphi[i] * dphi[j] / (phi * phi) - hphi[i * 3 + j] / phi;
          hess[0] += (1.0 - a) / (x * x);
          hess[4] += a / (y * y);
        }
      }
      return true;
    }
    case ConeKind::zero: return false;
  }
  return false;
}

/// Distance-like violation of membership of s in the cone.
inline double cone_violation(ConeKind kind, double alpha, const double* s, int d) {
  switch (kind) {
    case ConeKind::zero: {
      double m = 0.0;
      for (int i = 0; i < d; ++i) m = std::max(m, std::abs(s[i]));
      return m;
    }
    case ConeKind::nonnegative: return std::max(0.0, -s[0]);
    case ConeKind::second_order: {
      double uu = 0.0;
      for (int i = 1; i < d; ++i) uu += s[i] * s[i];
      return std::max(0.0, std::sqrt(uu) - s[0]);
    }
    case ConeKind::exponential: {
      const double x = s[0], y = s[1], z = s[2];
      if (y > 0.0) return std::max(0.0, y * std::exp(x / y) - z);
      // closure at y = 0: x <= 0, z >= 0
      return std::max({0.0, -y, x, -z});
    }
    case ConeKind::power: {
      const double x = std::max(0.0, s[0]), y = std::max(0.0, s[1]);
      const double lhs = std::pow(x, alpha) * std::pow(y, 1.0 - alpha);
      return std::max({0.0, -s[0], -s[1], std::abs(s[2]) - lhs});
    }
  }
  return 0.0;
}

/// Program flattened for fast barrier evaluation.
struct Compiled {
  int n = 0;
  Eigen::VectorXd c;
  double nu = 0.0;
  int max_dim = 0;
  int max_support = 0;

  // cone blocks, zero cones excluded
  std::vector<ConeKind> kind;
  std::vector<double> alpha;
  std::vector<double> weight;
  std::vector<int> dim, row_begin, supp_begin, supp_count, a_begin;
  std::vector<int> supp;   // variable indices
  std::vector<double> a;   // per block, dim x supp_count row-major
  std::vector<double> b;   // per row constant

  // equalities E x = f
  Eigen::SparseMatrix<double, Eigen::RowMajor> E;
  Eigen::VectorXd f;

  int num_blocks() const { return static_cast<int>(kind.size()); }
  int num_eq() const { return static_cast<int>(f.size()); }
};

inline Compiled compile(const ConicProgram& prog) {
  Compiled cp;
  cp.n = prog.num_vars();
  cp.c = Eigen::Map<const Eigen::VectorXd>(prog.objective().data(), cp.n);
  std::vector<Eigen::Triplet<double>> eq;
  std::vector<double> f;
  std::vector<int> local;
  for (const auto& blk : prog.blocks()) {
    if (blk.kind == ConeKind::zero) {
      for (const auto& row : blk.rows) {
        const int r = static_cast<int>(f.size());
        for (const auto& t : row.terms()) eq.emplace_back(r, t.var, t.coef);
        f.push_back(-row.constant());
      }
      continue;
    }
    const int d = static_cast<int>(blk.rows.size());
    local.clear();
    for (const auto& row : blk.rows)
      for (const auto& t : row.terms()) local.push_back(t.var);
    std::sort(local.begin(), local.end());
    local.erase(std::unique(local.begin(), local.end()), local.end());
    const int sn = static_cast<int>(local.size());

    cp.kind.push_back(blk.kind);
    cp.alpha.push_back(blk.alpha);
    cp.weight.push_back(blk.weight);
    cp.dim.push_back(d);
    cp.row_begin.push_back(static_cast<int>(cp.b.size()));
    cp.supp_begin.push_back(static_cast<int>(cp.supp.size()));
    cp.supp_count.push_back(sn);
    cp.a_begin.push_back(static_cast<int>(cp.a.size()));
    cp.supp.insert(cp.supp.end(), local.begin(), local.end());
    const std::size_t a0 = cp.a.size();
    cp.a.resize(a0 + static_cast<std::size_t>(d * sn), 0.0);
    for (int r = 0; r < d; ++r) {
      const auto& row = blk.rows[static_cast<std::size_t>(r)];
      for (const auto& t : row.terms()) {
        const int p = static_cast<int>(std::lower_bound(local.begin(), local.end(), t.var) - local.begin());
        cp.a[a0 + static_cast<std::size_t>(r * sn + p)] += t.coef;
      }
      cp.b.push_back(row.constant());
    }
    cp.nu += blk.weight * cone_degree(blk.kind);
    cp.max_dim = std::max(cp.max_dim, d);
    cp.max_support = std::max(cp.max_support, sn);
  }
  cp.E.resize(static_cast<int>(f.size()), cp.n);
  cp.E.setFromTriplets(eq.begin(), eq.end());
  cp.f = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  return cp;
}

/// Regularized KKT matrix [H + dp I, E'; E, -dd I] with a fixed sparsity
/// pattern, lower triangle only.
class KktSystem {
 public:
  KktSystem(const Compiled& cp, double primal_reg, double dual_reg)
      : cp_(cp), dp_(primal_reg), dd_(dual_reg) {
    const int n = cp.n, m = cp.num_eq();
    std::vector<Eigen::Triplet<double>> trip;
    for (int j = 0; j < n; ++j) trip.emplace_back(j, j, dp_);
    for (int blk = 0; blk < cp.num_blocks(); ++blk) {
      const int* s = &cp.supp[static_cast<std::size_t>(cp.supp_begin[blk])];
      const int sn = cp.supp_count[blk];
      for (int p = 0; p < sn; ++p)
        for (int q = 0; q < p; ++q) trip.emplace_back(s[p], s[q], 0.0);
    }
    for (int r = 0; r < m; ++r) {
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(cp.E, r); it; ++it)
        trip.emplace_back(n + r, static_cast<int>(it.col()), it.value());
      trip.emplace_back(n + r, n + r, -dd_);
    }
    K_.resize(n + m, n + m);
    K_.setFromTriplets(trip.begin(), trip.end());
    K_.makeCompressed();
    base_.assign(K_.valuePtr(), K_.valuePtr() + K_.nonZeros());

    pos_begin_.reserve(static_cast<std::size_t>(cp.num_blocks()));
    for (int blk = 0; blk < cp.num_blocks(); ++blk) {
      pos_begin_.push_back(static_cast<int>(pos_.size()));
      const int* s = &cp.supp[static_cast<std::size_t>(cp.supp_begin[blk])];
      const int sn = cp.supp_count[blk];
      for (int p = 0; p < sn; ++p)
        for (int q = 0; q <= p; ++q) pos_.push_back(find(s[p], s[q]));
    }
    diag_pos_.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) diag_pos_.push_back(find(j, j));
    extra_.setZero(n);
    ldlt_.analyzePattern(K_);
  }

  void reset() { std::copy(base_.begin(), base_.end(), K_.valuePtr()); }

  /// Adds the sn x sn row-major block M (support of blk) into the H part.
  void add_block(int blk, const double* M) {
    const int sn = cp_.supp_count[blk];
    const int* pos = &pos_[static_cast<std::size_t>(pos_begin_[blk])];
    double* val = K_.valuePtr();
    int idx = 0;
    for (int p = 0; p < sn; ++p)
      for (int q = 0; q <= p; ++q) val[pos[idx++]] += M[p * sn + q];
  }

  /// Retries with growing relative diagonal shifts when a pivot vanishes.
  bool factorize() {
    extra_.setZero();
    double eps = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      if (attempt > 0) {
        eps = eps == 0.0 ? 1e-14 : eps * 100.0;
        double* val = K_.valuePtr();
        for (int j = 0; j < cp_.n; ++j) {
          const auto q = static_cast<std::size_t>(diag_pos_[static_cast<std::size_t>(j)]);
          val[q] -= extra_[j];
          extra_[j] = eps * (1.0 + std::abs(val[q]));
          val[q] += extra_[j];
        }
      }
      ldlt_.factorize(K_);
      if (ldlt_.info() == Eigen::Success) return true;
    }
    return false;
  }

  /// Solves the unregularized system, refining while the residual keeps shrinking.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd sol = ldlt_.solve(rhs);
    const int n = cp_.n, m = cp_.num_eq();
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 8; ++it) {
      Eigen::VectorXd r = rhs - (K_.selfadjointView<Eigen::Lower>() * sol);
      r.head(n) += (extra_.array() + dp_).matrix().cwiseProduct(sol.head(n));
      r.tail(m) -= dd_ * sol.tail(m);
      const double norm = r.lpNorm<Eigen::Infinity>();
      if (!std::isfinite(norm) || norm >= 0.5 * prev) break;
      prev = norm;
      sol += ldlt_.solve(r);
    }
    return sol;
  }

 private:
  int find(int row, int col) const {
    const int* inner = K_.innerIndexPtr();
    const int* outer = K_.outerIndexPtr();
    const int* lo = inner + outer[col];
    const int* hi = inner + outer[col + 1];
    const int* it = std::lower_bound(lo, hi, row);
    return static_cast<int>(it - inner);
  }

  const Compiled& cp_;
  double dp_, dd_;
  Eigen::SparseMatrix<double> K_;
  std::vector<double> base_;
  std::vector<int> pos_begin_;
  std::vector<int> pos_;
  std::vector<int> diag_pos_;
  Eigen::VectorXd extra_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt_;
};

/// Barrier evaluation. Writes per-block values; derivatives are optional.
class BarrierEval {
 public:
  explicit BarrierEval(const Compiled& cp)
      : cp_(cp),
        s_(static_cast<std::size_t>(cp.max_dim)),
        g_(static_cast<std::size_t>(cp.max_dim)),
        h_(static_cast<std::size_t>(cp.max_dim * cp.max_dim)),
        w_(static_cast<std::size_t>(cp.max_dim * std::max(cp.max_support, 1))),
        m_(static_cast<std::size_t>(std::max(cp.max_support, 1) * std::max(cp.max_support, 1))),
        values_(static_cast<std::size_t>(cp.num_blocks())) {}

  /// Returns false if any block is outside its cone interior.
  bool evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, KktSystem* kkt) {
    if (grad) grad->setZero(cp_.n);
    for (int blk = 0; blk < cp_.num_blocks(); ++blk) {
      const int d = cp_.dim[blk], sn = cp_.supp_count[blk];
      const int* sp = &cp_.supp[static_cast<std::size_t>(cp_.supp_begin[blk])];
      const double* A = &cp_.a[static_cast<std::size_t>(cp_.a_begin[blk])];
      const double* b = &cp_.b[static_cast<std::size_t>(cp_.row_begin[blk])];
      for (int r = 0; r < d; ++r) {
        double v = b[r];
        for (int p = 0; p < sn; ++p) v += A[r * sn + p] * x[sp[p]];
        s_[static_cast<std::size_t>(r)] = v;
      }
      double val = 0.0;
      if (!cone_barrier(cp_.kind[blk], cp_.alpha[blk], s_.data(), d, val, grad ? g_.data() : nullptr,
                        kkt ? h_.data() : nullptr))
        return false;
      const double wt = cp_.weight[blk];
      values_[static_cast<std::size_t>(blk)] = wt * val;
      if (grad) {
        for (int p = 0; p < sn; ++p) {
          double acc = 0.0;
          for (int r = 0; r < d; ++r) acc += A[r * sn + p] * g_[static_cast<std::size_t>(r)];
          acc *= wt;
          (*grad)[sp[p]] += acc;
        }
      }
      if (kkt) {
        // W = Hs * A, M = A' * W
        for (int r = 0; r < d; ++r)
          for (int p = 0; p < sn; ++p) {
            double acc = 0.0;
            for (int q = 0; q < d; ++q) acc += h_[static_cast<std::size_t>(r * d + q)] * A[q * sn + p];
            w_[static_cast<std::size_t>(r * sn + p)] = acc;
          }
        for (int p = 0; p < sn; ++p)
          for (int q = 0; q <= p; ++q) {
            double acc = 0.0;
            for (int r = 0; r < d; ++r) acc += A[r * sn + p] * w_[static_cast<std::size_t>(r * sn + q)];
            m_[static_cast<std::size_t>(p * sn + q)] = wt * acc;
          }
        kkt->add_block(blk, m_.data());
      }
    }
    return true;
  }

  /// Sum over blocks of F_b(x) - values_b, or nullopt outside the domain.
  std::optional<double> delta_from(const Eigen::VectorXd& x, const std::vector<double>& ref) {
    double total = 0.0;
    for (int blk = 0; blk < cp_.num_blocks(); ++blk) {
      const int d = cp_.dim[blk], sn = cp_.supp_count[blk];
      const int* sp = &cp_.supp[static_cast<std::size_t>(cp_.supp_begin[blk])];
      const double* A = &cp_.a[static_cast<std::size_t>(cp_.a_begin[blk])];
      const double* b = &cp_.b[static_cast<std::size_t>(cp_.row_begin[blk])];
      for (int r = 0; r < d; ++r) {
        double v = b[r];
        for (int p = 0; p < sn; ++p) v += A[r * sn + p] * x[sp[p]];
        s_[static_cast<std::size_t>(r)] = v;
      }
      double val = 0.0;
      if (!cone_barrier(cp_.kind[blk], cp_.alpha[blk], s_.data(), d, val, nullptr, nullptr))
        return std::nullopt;
      total += cp_.weight[blk] * val - ref[static_cast<std::size_t>(blk)];
    }
    return total;
  }

  const std::vector<double>& values() const { return values_; }

 private:
  const Compiled& cp_;
  std::vector<double> s_, g_, h_, w_, m_;
  std::vector<double> values_;
};

struct RunResult {
  SolveStatus status = SolveStatus::numerical_failure;
  Eigen::VectorXd x;
  double gap = 0.0;
  int steps = 0;
  bool stopped_early = false;
  std::string message;
};

/// Path-following from a strictly feasible x0 with E x0 = f.
inline RunResult run_barrier(const Compiled& cp, Eigen::VectorXd x, double tol, int max_steps,
                             const std::function<bool(const Eigen::VectorXd&)>& stop_early = {}) {
  RunResult res;
  KktSystem kkt(cp, 1e-11, 1e-11);
  BarrierEval eval(cp);
  const int n = cp.n, m = cp.num_eq();
  const double nu = std::max(cp.nu, 1.0);
  constexpr double kMu = 10.0;
  constexpr double kInnerTol = 1e-9;
  constexpr double kDivergence = 1e13;

  double t = nu / std::max(1.0, std::abs(cp.c.dot(x)));
  Eigen::VectorXd grad(n), rhs(n + m), x_new(n);
  std::vector<double> ref;
  int stalls = 0;

  for (;;) {
    bool stalled = false;
    double prev_lambda2 = std::numeric_limits<double>::infinity();
    for (;;) {
      kkt.reset();
      if (!eval.evaluate(x, &grad, &kkt)) {
        res.message = "iterate left the cone interior";
        res.x = x;
        return res;
      }
      ref = eval.values();
      grad += t * cp.c;
      rhs.head(n) = -grad;
      if (m > 0) rhs.tail(m) = -(cp.E * x - cp.f);
      if (!kkt.factorize()) {
        res.message = "KKT factorization failed";
        res.x = x;
        return res;
      }
      const Eigen::VectorXd sol = kkt.solve(rhs);
      const Eigen::VectorXd dx = sol.head(n);
      const double lambda2 = -grad.dot(dx);
      if (!std::isfinite(lambda2)) {
        res.message = "non-finite Newton decrement";
        res.x = x;
        return res;
      }
      if (lambda2 <= 2.0 * kInnerTol) break;
      // near the center Newton converges quadratically; a decrement that stops
      // shrinking means roundoff dominates and the point is as central as it gets
      if (lambda2 <= 1e-4 && lambda2 > 0.5 * prev_lambda2) break;
      prev_lambda2 = lambda2;

      // backtracking: domain first, then sufficient decrease
      double step = 1.0;
      std::optional<double> dF;
      for (int k = 0; k < 80; ++k) {
        x_new = x + step * dx;
        dF = eval.delta_from(x_new, ref);
        if (dF && *dF + t * step * cp.c.dot(dx) <= -0.01 * step * lambda2) break;
        dF.reset();
        step *= 0.5;
      }
      if (!dF) {
        stalled = true;
        break;
      }
      x = x_new;
      ++res.steps;
      if (stop_early && stop_early(x)) {
        res.stopped_early = true;
        res.status = SolveStatus::optimal;
        res.x = x;
        return res;
      }
      if (x.lpNorm<Eigen::Infinity>() > kDivergence) {
        res.status = SolveStatus::unbounded;
        res.message = "iterates diverge along a direction of decreasing objective";
        res.x = x;
        return res;
      }
      if (res.steps >= max_steps) {
        res.message = "Newton step limit reached";
        res.x = x;
        return res;
      }
    }
    const double obj = cp.c.dot(x);
    res.gap = (nu / t) / std::max(1.0, std::abs(obj));
    if (res.gap <= tol) {
      res.status = SolveStatus::optimal;
      res.x = x;
      return res;
    }
    stalls = stalled ? stalls + 1 : 0;
    if (stalls >= 3) {
      std::ostringstream os;
      os << "line search stalled at relative gap " << res.gap;
      res.message = os.str();
      res.x = x;
      return res;
    }
    t *= kMu;
  }
}

/// Minimum-norm solution of E x = f, or nullopt if inconsistent.
inline std::optional<Eigen::VectorXd> equality_start(const Compiled& cp) {
  if (cp.num_eq() == 0) return Eigen::VectorXd::Zero(cp.n);
  const int n = cp.n, m = cp.num_eq();
  std::vector<Eigen::Triplet<double>> trip;
  for (int j = 0; j < n; ++j) trip.emplace_back(j, j, 1.0);
  for (int r = 0; r < m; ++r) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(cp.E, r); it; ++it)
      trip.emplace_back(n + r, static_cast<int>(it.col()), it.value());
    trip.emplace_back(n + r, n + r, -1e-12);
  }
  Eigen::SparseMatrix<double> K(n + m, n + m);
  K.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt(K);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
  rhs.tail(m) = cp.f;
  Eigen::VectorXd sol = ldlt.solve(rhs);
  for (int it = 0; it < 3; ++it) {
    Eigen::VectorXd r = rhs - K.selfadjointView<Eigen::Lower>() * sol;
    r.tail(m) -= 1e-12 * sol.tail(m);
    sol += ldlt.solve(r);
  }
  Eigen::VectorXd x = sol.head(n);
  const double resid = (cp.E * x - cp.f).lpNorm<Eigen::Infinity>();
  if (!(resid <= 1e-8 * (1.0 + cp.f.lpNorm<Eigen::Infinity>()))) return std::nullopt;
  return x;
}

/// Interior direction used to shift each cone in phase I.
inline std::vector<double> interior_direction(ConeKind kind, int d) {
  std::vector<double> e(static_cast<std::size_t>(d), 0.0);
  switch (kind) {
    case ConeKind::nonnegative:
    case ConeKind::second_order: e[0] = 1.0; break;
    case ConeKind::exponential: e = {-1.0, 1.0, 1.0}; break;
    case ConeKind::power: e[0] = 1.0; e[1] = 1.0; break;
    case ConeKind::zero: break;
  }
  return e;
}

inline bool strictly_interior(const ConicProgram& prog, const Eigen::VectorXd& x) {
  if (x.size() != prog.num_vars() || !x.allFinite()) return false;
  std::vector<double> s, g;
  for (const auto& blk : prog.blocks()) {
    const int d = static_cast<int>(blk.rows.size());
    s.resize(static_cast<std::size_t>(d));
    for (int r = 0; r < d; ++r) s[static_cast<std::size_t>(r)] = blk.rows[static_cast<std::size_t>(r)].evaluate(x);
    if (blk.kind == ConeKind::zero) {
      for (double v : s)
        if (std::abs(v) > 1e-9) return false;
      continue;
    }
    double val = 0.0;
    if (!cone_barrier(blk.kind, blk.alpha, s.data(), d, val, nullptr, nullptr)) return false;
  }
  return true;
}

/// Phase I: returns a strictly feasible point, or a status explaining why not.
inline RunResult find_interior_point(const ConicProgram& prog, double tol, int max_steps) {
  RunResult res;
  const Compiled base = compile(prog);
  const auto x0 = equality_start(base);
  if (!x0) {
    res.status = SolveStatus::infeasible;
    res.message = "equality constraints are inconsistent";
    return res;
  }
  const int n = prog.num_vars();
  const double box = 1e6 * (1.0 + x0->lpNorm<Eigen::Infinity>());

  ConicProgram aux;
  aux.add_variables(n + 1);
  const int sigma = n;
  aux.set_objective(sigma, 1.0);
  for (const auto& blk : prog.blocks()) {
    if (blk.kind == ConeKind::zero) {
      for (const auto& r : blk.rows) aux.add_equality(r);
      continue;
    }
    const auto e = interior_direction(blk.kind, static_cast<int>(blk.rows.size()));
    std::vector<LinExpr> rows = blk.rows;
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r].add(sigma, e[r]);
    switch (blk.kind) {
      case ConeKind::nonnegative: aux.add_nonnegative(rows[0]); break;
      case ConeKind::second_order: {
        LinExpr t = rows[0];
        rows.erase(rows.begin());
        aux.add_second_order(std::move(t), std::move(rows));
        break;
      }
      case ConeKind::exponential: aux.add_exponential(rows[0], rows[1], rows[2]); break;
      case ConeKind::power: aux.add_power(rows[0], rows[1], rows[2], blk.alpha); break;
      case ConeKind::zero: break;
    }
    aux.set_barrier_weight(aux.num_blocks() - 1, blk.weight);
  }
  for (int j = 0; j < n; ++j) {
    aux.add_nonnegative(LinExpr(box).add(j, -1.0));
    aux.add_nonnegative(LinExpr(box).add(j, 1.0));
  }
  aux.add_nonnegative(LinExpr(1.0).add(sigma, 1.0));

  Eigen::VectorXd z(n + 1);
  z.head(n) = *x0;
  double shift = 1.0;
  for (int k = 0; k < 200; ++k) {
    z[sigma] = shift;
    if (strictly_interior(aux, z)) break;
    shift *= 2.0;
  }
  z[sigma] = 2.0 * shift + 1.0;
  if (!strictly_interior(aux, z)) {
    res.message = "could not construct a phase I start";
    return res;
  }

  const Compiled cp = compile(aux);
  RunResult r = run_barrier(cp, z, tol, max_steps, [sigma](const Eigen::VectorXd& v) { return v[sigma] < 0.0; });
  res.steps = r.steps;
  if (r.stopped_early) {
    res.status = SolveStatus::optimal;
    res.x = r.x.head(n);
    return res;
  }
  if (r.status == SolveStatus::optimal) {
    res.status = SolveStatus::infeasible;
    res.message = "no strictly feasible point (phase I optimum is nonnegative)";
    return res;
  }
  res.status = SolveStatus::numerical_failure;
  res.message = "phase I: " + r.message;
  return res;
}

}  // namespace detail

inline double ConicProgram::max_violation(const Eigen::VectorXd& x) const {
  double worst = 0.0;
  std::vector<double> s;
  for (const auto& blk : blocks_) {
    const int d = static_cast<int>(blk.rows.size());
    s.resize(static_cast<std::size_t>(d));
    for (int r = 0; r < d; ++r) s[static_cast<std::size_t>(r)] = blk.rows[static_cast<std::size_t>(r)].evaluate(x);
    worst = std::max(worst, detail::cone_violation(blk.kind, blk.alpha, s.data(), d));
  }
  return worst;
}

inline ConicSolution solve(const ConicProgram& program, const SolveOptions& options) {
  ConicSolution sol;
  if (!(options.tol > 0.0)) {
    sol.message = "tolerance must be positive";
    return sol;
  }
  Eigen::VectorXd start;
  int steps = 0;
  if (options.initial_point && detail::strictly_interior(program, *options.initial_point)) {
    start = *options.initial_point;
  } else {
    auto p1 = detail::find_interior_point(program, options.tol, options.max_newton_steps);
    steps += p1.steps;
    if (p1.status != SolveStatus::optimal) {
      sol.status = p1.status;
      sol.message = p1.message;
      sol.newton_steps = steps;
      return sol;
    }
    start = std::move(p1.x);
  }
  const detail::Compiled cp = detail::compile(program);
  auto run = detail::run_barrier(cp, std::move(start), options.tol, options.max_newton_steps);
  sol.status = run.status;
  sol.primal = std::move(run.x);
  sol.objective_value = sol.primal.size() == program.num_vars() ? program.evaluate_objective(sol.primal) : 0.0;
  sol.gap = run.gap;
  sol.newton_steps = steps + run.steps;
  sol.message = run.message;
  return sol;
}

inline ConicSolution tie_break(const ConicProgram& program, double primal_value, double tol,
                               const Eigen::VectorXd* start, int max_newton_steps, double start_gap) {
  const int n = program.num_vars();
  std::vector<int> theta = program.decision_variables();
  if (theta.empty()) {
    theta.resize(static_cast<std::size_t>(n));
    std::iota(theta.begin(), theta.end(), 0);
  }
  ConicProgram tb = program;
  const int tau = tb.add_variables(1);
  for (int j = 0; j < n; ++j) tb.set_objective(j, 0.0);
  tb.set_objective(tau, 1.0);
  std::vector<LinExpr> u;
  u.reserve(theta.size());
  for (int v : theta) u.push_back(LinExpr::variable(v));
  tb.add_second_order(LinExpr::variable(tau), std::move(u));
  LinExpr budget(primal_value + tol * std::max(1.0, std::abs(primal_value)));
  for (int j = 0; j < n; ++j) budget.add(j, -program.objective()[static_cast<std::size_t>(j)]);
  tb.add_nonnegative(std::move(budget));
  // A start on the original central path at relative gap g is close to
  // central for the slab when the slab barrier carries weight nu * tol / g.
  double nu = 0.0;
  for (const auto& blk : program.blocks()) nu += blk.weight * detail::cone_degree(blk.kind);
  if (start_gap > 0.0) tb.set_barrier_weight(tb.num_blocks() - 1, std::max(1.0, nu * tol / std::min(start_gap, tol)));

  SolveOptions opts;
  opts.tol = tol;
  opts.max_newton_steps = max_newton_steps;
  if (start && start->size() == n) {
    Eigen::VectorXd z(n + 1);
    z.head(n) = *start;
    double norm2 = 0.0;
    for (int v : theta) norm2 += (*start)[v] * (*start)[v];
    z[tau] = std::sqrt(norm2) + 1.0;
    opts.initial_point = std::move(z);
  }
  ConicSolution inner = solve(tb, opts);
  ConicSolution out;
  out.status = inner.status;
  out.gap = inner.gap;
  out.newton_steps = inner.newton_steps;
  out.message = inner.message;
  if (inner.primal.size() == n + 1) {
    out.primal = inner.primal.head(n);
    out.objective_value = program.evaluate_objective(out.primal);
  }
  return out;
}

}  // namespace scenreach::conic
