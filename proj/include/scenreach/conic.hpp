#pragma once

// Conic program representation and solution contract.
//
// A ConicProgram is a linear objective over real variables subject to a list
// of cone memberships, each one an affine map of the variables:
//
//   zero          e == 0
//   nonnegative   e >= 0
//   second order  ||(u_1..u_d)||_2 <= t
//   exponential   y * exp(x / y) <= z,  y > 0
//   power         x^alpha * y^(1 - alpha) >= |z|,  x, y >= 0
//
// solve() is backed by the barrier interior-point method in
// detail/barrier.hpp. Solutions never throw; failures are reported through
// SolveStatus.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "scenreach/error.hpp"

namespace scenreach::conic {

struct Term {
  int var;
  double coef;
};

/// Affine expression sum_j coef_j * x_j + constant. Zero coefficients are dropped.
class LinExpr {
 public:
  LinExpr() = default;
  explicit LinExpr(double constant) : constant_(constant) {}

  static LinExpr variable(int index, double coef = 1.0) {
    LinExpr e;
    e.add(index, coef);
    return e;
  }

  LinExpr& add(int var, double coef) {
    if (coef != 0.0) terms_.push_back({var, coef});
    return *this;
  }
  LinExpr& add_constant(double c) {
    constant_ += c;
    return *this;
  }

  const std::vector<Term>& terms() const { return terms_; }
  double constant() const { return constant_; }

  double evaluate(const Eigen::VectorXd& x) const {
    double v = constant_;
    for (const auto& t : terms_) v += t.coef * x[t.var];
    return v;
  }

 private:
  std::vector<Term> terms_;
  double constant_ = 0.0;
};

enum class ConeKind { zero, nonnegative, second_order, exponential, power };

struct ConeBlock {
  ConeKind kind;
  double alpha = 0.0;  // power cone exponent
  std::vector<LinExpr> rows;
  double weight = 1.0;  // multiplier on this block's barrier
};

class ConicProgram {
 public:
  /// Appends `count` variables and returns the index of the first one.
  int add_variables(int count) {
    if (count < 0) throw InputError("add_variables: negative count");
    const int first = num_vars_;
    num_vars_ += count;
    objective_.resize(static_cast<std::size_t>(num_vars_), 0.0);
    return first;
  }

  int num_vars() const { return num_vars_; }

  void set_objective(int var, double coef) {
    check_var(var);
    if (!std::isfinite(coef)) throw InputError("objective coefficient must be finite");
    objective_[static_cast<std::size_t>(var)] = coef;
  }
  const std::vector<double>& objective() const { return objective_; }

  void add_equality(LinExpr e) { push({ConeKind::zero, 0.0, {std::move(e)}}); }
  void add_nonnegative(LinExpr e) { push({ConeKind::nonnegative, 0.0, {std::move(e)}}); }

  /// ||u||_2 <= t
  void add_second_order(LinExpr t, std::vector<LinExpr> u) {
    std::vector<LinExpr> rows;
    rows.reserve(u.size() + 1);
    rows.push_back(std::move(t));
    for (auto& e : u) rows.push_back(std::move(e));
    push({ConeKind::second_order, 0.0, std::move(rows)});
  }

  /// y * exp(x / y) <= z
  void add_exponential(LinExpr x, LinExpr y, LinExpr z) {
    push({ConeKind::exponential, 0.0, {std::move(x), std::move(y), std::move(z)}});
  }

  /// x^alpha * y^(1 - alpha) >= |z| with alpha in (0, 1]
  void add_power(LinExpr x, LinExpr y, LinExpr z, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("power cone exponent must lie in (0, 1]");
    push({ConeKind::power, alpha, {std::move(x), std::move(y), std::move(z)}});
  }

  /// Scales the barrier of one block (w >= 1 keeps self-concordance). A
  /// heavier barrier keeps iterates further from a curved cone boundary
  /// that many other blocks press against.
  void set_barrier_weight(int block, double w) {
    if (block < 0 || block >= static_cast<int>(blocks_.size())) throw InputError("block index out of range");
    if (!(w >= 1.0) || !std::isfinite(w)) throw InputError("barrier weight must be finite and at least 1");
    blocks_[static_cast<std::size_t>(block)].weight = w;
  }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }

  /// Variables that make up the decision vector for tie-breaking. Empty means all.
  void set_decision_variables(std::vector<int> vars) {
    for (int v : vars) check_var(v);
    decision_vars_ = std::move(vars);
  }
  const std::vector<int>& decision_variables() const { return decision_vars_; }

  const std::vector<ConeBlock>& blocks() const { return blocks_; }

  double evaluate_objective(const Eigen::VectorXd& x) const {
    double v = 0.0;
    for (int j = 0; j < num_vars_; ++j) v += objective_[static_cast<std::size_t>(j)] * x[j];
    return v;
  }

  /// Largest violation of any cone membership at x (0 when x is feasible).
  double max_violation(const Eigen::VectorXd& x) const;

 private:
  void check_var(int v) const {
    if (v < 0 || v >= num_vars_) throw InputError("variable index out of range");
  }
  void push(ConeBlock block) {
    for (const auto& r : block.rows) {
      if (!std::isfinite(r.constant())) throw InputError("non-finite constant in cone row");
      for (const auto& t : r.terms()) {
        check_var(t.var);
        if (!std::isfinite(t.coef)) throw InputError("non-finite coefficient in cone row");
      }
    }
    if (block.kind == ConeKind::second_order && block.rows.empty())
      throw InputError("second-order cone needs at least one row");
    blocks_.push_back(std::move(block));
  }

  int num_vars_ = 0;
  std::vector<double> objective_;
  std::vector<ConeBlock> blocks_;
  std::vector<int> decision_vars_;
};

enum class SolveStatus { optimal, infeasible, unbounded, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

struct ConicSolution {
  SolveStatus status = SolveStatus::numerical_failure;
  Eigen::VectorXd primal;
  double objective_value = 0.0;
  /// Barrier duality gap nu/t relative to max(1, |objective|).
  double gap = 0.0;
  int newton_steps = 0;
  std::string message;
};

constexpr double kDefaultTol = 1e-8;

struct SolveOptions {
  double tol = kDefaultTol;
  /// Strictly feasible starting point; skips phase I when it checks out.
  std::optional<Eigen::VectorXd> initial_point;
  int max_newton_steps = 4000;
};

ConicSolution solve(const ConicProgram& program, const SolveOptions& options);

inline ConicSolution solve(const ConicProgram& program, double tol = kDefaultTol) {
  SolveOptions opts;
  opts.tol = tol;
  return solve(program, opts);
}

/// Minimum Euclidean norm of the decision variables among points whose
/// objective is within tol (relative to max(1, |primal_value|)) of
/// primal_value. `start`, when given, must be strictly feasible for program;
/// a positive start_gap (the relative gap at which start was produced)
/// reweights the objective slab so that start is nearly central for it.
ConicSolution tie_break(const ConicProgram& program, double primal_value, double tol,
                        const Eigen::VectorXd* start = nullptr, int max_newton_steps = 4000,
                        double start_gap = 0.0);

}  // namespace scenreach::conic

#include "scenreach/detail/barrier.hpp"
