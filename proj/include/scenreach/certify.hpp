#pragma once

// A-posteriori certificates: adversarial complexity of a fitted tube, the
// violation interval obtained from the two scenario polynomials, and the
// Wasserstein-ball extension for shifted test distributions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scenreach/core.hpp"
#include "scenreach/error.hpp"
#include "scenreach/fit.hpp"

namespace scenreach {

inline constexpr double kDefaultTolActive = 1e-6;

enum class FlagReason { violated, active };

inline const char* to_string(FlagReason r) { return r == FlagReason::violated ? "violated" : "active"; }

struct FlaggedIndex {
  int index = 0;
  FlagReason reason = FlagReason::active;
  double margin = 0.0;
};

struct ComplexityReport {
  int s_star = 0;
  std::vector<FlaggedIndex> flagged_indices;
  double tol_active = kDefaultTolActive;
  /// The enumerated vertex set is the full perturbation set for box and
  /// vertex-list models, so "violated on the enumeration" and "violated on
  /// the perturbation set" are the same test.
  bool outer_conditions_merged = true;
};

/// Counts trajectories whose worst perturbed margin is > tol_active
/// (violated) or within tol_active of zero (active).
inline ComplexityReport adversarial_complexity(const FitResult& fit, const TrajectoryBatch& batch,
                                               const PerturbationModel& model,
                                               double tol_active = kDefaultTolActive) {
  if (!(tol_active >= 0.0) || !std::isfinite(tol_active)) throw InputError("tol_active must be finite and >= 0");
  if (batch.size() == 0) throw InputError("empty batch");
  if (!fit.slacks.empty() && static_cast<int>(fit.slacks.size()) != batch.size())
    throw InputError("fit was produced from a batch of a different size");
  if (batch.horizon() != fit.tube.horizon() || batch.state_dim() != fit.tube.state_dim())
    throw InputError("fit and batch dimensions do not match");
  const auto offsets = model.offsets_for(batch.state_dim());
  ComplexityReport rep;
  rep.tol_active = tol_active;
  for (int i = 0; i < batch.size(); ++i) {
    const double m = worst_vertex_margin(fit.tube, batch[i], offsets);
    if (m > tol_active)
      rep.flagged_indices.push_back({i, FlagReason::violated, m});
    else if (std::abs(m) <= tol_active)
      rep.flagged_indices.push_back({i, FlagReason::active, m});
  }
  rep.s_star = static_cast<int>(rep.flagged_indices.size());
  return rep;
}

struct EpsilonInterval {
  double eps_lo = 0.0;
  double eps_hi = 1.0;
  double t_lo = 0.0;
  double t_hi = 0.0;
  bool vacuous = false;  // nu == N
  bool no_root = false;  // phi < 0 on (0, 1]
};

namespace detail {

inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// log(a + b) for a, b >= 0 given as logs.
inline double log_add(double la, double lb) {
  if (la < lb) std::swap(la, lb);
  if (lb == -std::numeric_limits<double>::infinity()) return la;
  return la + std::log1p(std::exp(lb - la));
}

/// phi(t) = 1 - sum_i w_i t^{i-N}, with log w_i precomputed for the two sums.
class ScenarioPolynomial {
 public:
  ScenarioPolynomial(int N, int nu, double beta) : N_(N) {
    const double lb_nu = log_binomial(N, nu);
    const double l2 = std::log(beta / (2.0 * N));
    const double l6 = std::log(beta / (6.0 * N));
    for (int i = nu; i <= 4 * N; ++i) {
      if (i == N) continue;
      exps_.push_back(i - N);
      logw_.push_back((i < N ? l2 : l6) + log_binomial(i, nu) - lb_nu);
    }
  }

  /// log of sum_i w_i t^{i-N}.
  double log_tail(double t) const {
    const double lt = std::log(t);
    double acc = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < exps_.size(); ++j) acc = log_add(acc, logw_[j] + exps_[j] * lt);
    return acc;
  }

  double operator()(double t) const { return 1.0 - std::exp(log_tail(t)); }

  int N() const { return N_; }

 private:
  int N_;
  std::vector<int> exps_;
  std::vector<double> logw_;
};

inline constexpr double kRootTiny = 1e-12;
inline constexpr int kMaxBisection = 200;

/// Sign change of f on [a, b]; a_negative gives the sign of f(a).
template <typename F>
double bisect(const F& f, double a, double b, bool a_negative) {
  for (int it = 0; it < kMaxBisection; ++it) {
    const double m = 0.5 * (a + b);
    if (m <= a || m >= b) return m;
    if ((f(m) < 0.0) == a_negative)
      a = m;
    else
      b = m;
  }
  std::ostringstream os;
  os.precision(17);
  os << "bisection did not converge; bracket [" << a << ", " << b << "]";
  throw NumericalError(os.str());
}

/// Minimizer of a convex f on [a, b].
template <typename F>
double golden_min(const F& f, double a, double b) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
    if (f1 > f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = f(x1);
    }
  }
  return f1 > f2 ? x2 : x1;
}

}  // namespace detail

inline EpsilonInterval epsilon_roots(int N, int nu, double beta) {
  if (N < 1) throw InputError("N must be >= 1");
  if (nu < 0 || nu > N) throw InputError("nu must lie in [0, N]");
  if (!(beta > 0.0 && beta < 1.0)) throw InputError("beta must lie in (0, 1)");
  EpsilonInterval out;

  if (nu == N) {
    // 1 - (beta/6N) sum_{i=N+1}^{4N} C(i,N) t^{i-N}: decreasing in t, 1 at t=0.
    const double l6 = std::log(beta / (6.0 * N));
    auto f = [&](double t) {
      const double lt = std::log(t);
      double acc = -std::numeric_limits<double>::infinity();
      for (int i = N + 1; i <= 4 * N; ++i)
        acc = detail::log_add(acc, l6 + detail::log_binomial(i, N) + (i - N) * lt);
      return 1.0 - std::exp(acc);
    };
    double hi = 1.0;
    while (f(hi) > 0.0) hi *= 2.0;
    const double t = detail::bisect(f, 0.0, hi, false);
    out.t_lo = t;
    out.t_hi = 0.0;
    out.eps_lo = std::max(0.0, 1.0 - t);
    out.eps_hi = 1.0;
    out.vacuous = true;
    return out;
  }

  const detail::ScenarioPolynomial phi(N, nu, beta);
  // log_tail is a log-sum-exp of affine functions of log t, hence convex in log t.
  const double peak = std::exp(detail::golden_min([&](double s) { return phi.log_tail(std::exp(s)); },
                                                  std::log(detail::kRootTiny), 0.0));
  if (!(phi(peak) > 0.0)) {
    out.no_root = true;
    out.eps_lo = 0.0;
    out.eps_hi = 1.0;
    return out;
  }
  out.t_lo = phi(detail::kRootTiny) < 0.0 ? detail::bisect(phi, detail::kRootTiny, peak, true) : 0.0;
  if (phi(1.0) < 0.0) {
    out.t_hi = detail::bisect(phi, peak, 1.0, false);
  } else {
    double hi = 2.0;
    while (phi(hi) >= 0.0) hi *= 2.0;
    out.t_hi = detail::bisect(phi, 1.0, hi, false);
  }
  out.eps_hi = std::clamp(1.0 - out.t_lo, 0.0, 1.0);
  out.eps_lo = std::max(0.0, 1.0 - out.t_hi);
  return out;
}

struct OodBound {
  double mu_tilde = 0.0;
  double R = 1.0;
  double raw = 0.0;    // eps_hi + mu_tilde / R
  double bound = 0.0;  // min(raw, 1)
  bool clamped = false;

  bool operator==(const OodBound&) const = default;
};

struct Certificate {
  int N = 0;
  double beta = 0.0;
  int s_star = 0;
  double eps_lo = 0.0;
  double eps_hi = 1.0;
  bool vacuous = false;
  bool no_root = false;
  std::string interpretation;
  std::optional<OodBound> ood;

  bool operator==(const Certificate&) const = default;
};

inline Certificate certificate(int N, double beta, const ComplexityReport& report) {
  if (report.s_star < 0 || report.s_star > N) throw InputError("complexity report does not match N");
  const EpsilonInterval e = epsilon_roots(N, report.s_star, beta);
  Certificate c;
  c.N = N;
  c.beta = beta;
  c.s_star = report.s_star;
  c.eps_lo = e.eps_lo;
  c.eps_hi = e.eps_hi;
  c.vacuous = e.vacuous;
  c.no_root = e.no_root;
  std::ostringstream os;
  os.precision(6);
  os << "with confidence >= " << 1.0 - beta << " over the training draw, the adversarial exclusion probability lies in ["
     << c.eps_lo << ", " << c.eps_hi << "]";
  if (c.vacuous) os << "; upper bound vacuous (every trajectory is support)";
  if (c.no_root) os << "; no root in (0, 1], upper bound set to 1";
  c.interpretation = os.str();
  return c;
}

inline Certificate ood_bound(Certificate cert, double mu_tilde, double R) {
  if (!(R > 0.0) || !std::isfinite(R)) throw InputError("R must be positive");
  if (!(mu_tilde >= 0.0) || !std::isfinite(mu_tilde)) throw InputError("mu_tilde must be >= 0");
  OodBound o;
  o.mu_tilde = mu_tilde;
  o.R = R;
  o.raw = cert.eps_hi + mu_tilde / R;
  o.clamped = o.raw > 1.0;
  o.bound = std::min(o.raw, 1.0);
  cert.ood = o;
  return cert;
}

struct GaussianParams {
  Vector mean;
  Vector variance;  // diagonal of the covariance
};

/// Closed-form 2-Wasserstein distance between diagonal Gaussians; an upper
/// bound on their 1-Wasserstein distance.
inline double gaussian_w2_bound(const GaussianParams& nominal, const GaussianParams& shifted) {
  const auto n = nominal.mean.size();
  if (nominal.variance.size() != n || shifted.mean.size() != n || shifted.variance.size() != n)
    throw InputError("Gaussian parameter dimensions do not match");
  if (!(nominal.variance.array() > 0.0).all() || !(shifted.variance.array() > 0.0).all())
    throw InputError("variances must be positive");
  const double dm = (nominal.mean - shifted.mean).squaredNorm();
  const double ds = (nominal.variance.cwiseSqrt() - shifted.variance.cwiseSqrt()).squaredNorm();
  return std::sqrt(dm + ds);
}

}  // namespace scenreach
