#pragma once

// Benchmark data: the two-state tanh system, counter-based sampling keyed by
// (seed, trajectory, timestep), empirical exclusion estimators, and the
// coverage / shifted-distribution / rho-sweep experiment drivers.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "scenreach/certify.hpp"
#include "scenreach/core.hpp"
#include "scenreach/error.hpp"
#include "scenreach/fit.hpp"

namespace scenreach {

struct UniformBox {
  Vector lo, hi;
};

struct DiagGaussian {
  Vector mean;
  Vector variance;
};

using Distribution = std::variant<UniformBox, DiagGaussian>;

struct BenchmarkConfig {
  Matrix A = Matrix::Identity(2, 2);
  Matrix B = Matrix::Zero(2, 1);
  Matrix C = Matrix::Zero(1, 2);
  double a = 0.0;
  int T = 1;
  Distribution initial = UniformBox{Vector::Zero(2), Vector::Zero(2)};
  Distribution disturbance = UniformBox{Vector::Zero(2), Vector::Zero(2)};
  std::uint64_t seed = 0;

  int state_dim() const { return static_cast<int>(A.rows()); }
  void validate() const;
};

namespace detail {

inline void check_distribution(const Distribution& d, int n, const char* what) {
  std::visit(
      [&](const auto& v) {
        using D = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<D, UniformBox>) {
          if (v.lo.size() != n || v.hi.size() != n) throw InputError(std::string(what) + ": box dimension mismatch");
          if (!v.lo.allFinite() || !v.hi.allFinite() || !(v.lo.array() <= v.hi.array()).all())
            throw InputError(std::string(what) + ": box needs finite lo <= hi");
        } else {
          if (v.mean.size() != n || v.variance.size() != n)
            throw InputError(std::string(what) + ": Gaussian dimension mismatch");
          if (!v.mean.allFinite() || !v.variance.allFinite() || !(v.variance.array() > 0.0).all())
            throw InputError(std::string(what) + ": variances must be positive");
        }
      },
      d);
}

}  // namespace detail

inline void BenchmarkConfig::validate() const {
  const auto n = A.rows();
  if (n < 1 || A.cols() != n) throw InputError("A must be square");
  if (B.rows() != n || C.cols() != n || B.cols() != C.rows()) throw InputError("B, C dimensions do not match A");
  if (!A.allFinite() || !B.allFinite() || !C.allFinite() || !std::isfinite(a))
    throw InputError("system matrices must be finite");
  if (T < 1) throw InputError("T must be >= 1");
  detail::check_distribution(initial, static_cast<int>(n), "initial distribution");
  detail::check_distribution(disturbance, static_cast<int>(n), "disturbance distribution");
}

enum class Preset { sec6a, sec6b, sec6b_shifted };

/// The benchmark system with the distributions of the named experiment.
inline BenchmarkConfig preset(Preset p) {
  BenchmarkConfig c;
  c.A.resize(2, 2);
  c.A << 0.95, 0.10, -0.20, 0.85;
  c.B.resize(2, 1);
  c.B << 0.18, 0.06;
  c.C.resize(1, 2);
  c.C << 1.0, 0.0;
  c.a = -0.9;
  c.T = 25;
  const auto vec2 = [](double x, double y) {
    Vector v(2);
    v << x, y;
    return v;
  };
  switch (p) {
    case Preset::sec6a:
      c.initial = UniformBox{vec2(-0.6, -0.45), vec2(0.6, 0.45)};
      c.disturbance = UniformBox{vec2(-0.05, -0.05), vec2(0.05, 0.05)};
      break;
    case Preset::sec6b:
      c.initial = DiagGaussian{vec2(0.0, 0.0), vec2(0.3 * 0.3, 0.225 * 0.225)};
      c.disturbance = DiagGaussian{vec2(0.0, 0.0), vec2(0.0167 * 0.0167, 0.0167 * 0.0167)};
      break;
    case Preset::sec6b_shifted:
      c.initial = DiagGaussian{vec2(0.01, -0.01), vec2(0.315 * 0.315, 0.23625 * 0.23625)};
      c.disturbance = DiagGaussian{vec2(0.002, -0.002), vec2(0.0175 * 0.0175, 0.0175 * 0.0175)};
      break;
  }
  return c;
}

inline constexpr double kPresetGamma = 0.03;
inline constexpr double kPresetMuTilde = 0.0243;

// ---------------------------------------------------------------------------
// Counter-based sampling

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Hash of (seed, i, k, slot); slot separates the draws within one (i, k).
inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t i, std::uint64_t k, std::uint64_t slot) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ i);
  h = splitmix64(h ^ k);
  return splitmix64(h ^ slot);
}

/// Uniform on (0, 1) from the top 53 bits, never exactly 0 or 1.
inline double to_unit(std::uint64_t h) { return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53; }

/// One coordinate of distribution d. Normals use Box-Muller on two slots.
inline double draw(const Distribution& d, int dim, std::uint64_t seed, std::uint64_t i, std::uint64_t k) {
  const auto u = [&](std::uint64_t s) { return to_unit(counter_hash(seed, i, k, 2 * static_cast<std::uint64_t>(dim) + s)); };
  if (const auto* b = std::get_if<UniformBox>(&d)) return b->lo[dim] + (b->hi[dim] - b->lo[dim]) * u(0);
  const auto& g = std::get<DiagGaussian>(d);
  const double z = std::sqrt(-2.0 * std::log(u(0))) * std::cos(2.0 * std::numbers::pi * u(1));
  return g.mean[dim] + std::sqrt(g.variance[dim]) * z;
}

}  // namespace detail

/// Derived seed for an independent sub-experiment.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return detail::counter_hash(seed, a, b, 0xA5A5A5A5ULL);
}

/// x_{k+1} = A x_k + B a tanh(C x_k) + w_k. Draws for x_0 use k = 0 and the
/// disturbance w_k uses counter k + 1.
inline TrajectoryBatch simulate_benchmark(const BenchmarkConfig& cfg, int N) {
  cfg.validate();
  if (N < 1) throw InputError("N must be >= 1");
  const int n = cfg.state_dim();
  std::vector<Trajectory> trs;
  trs.reserve(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const auto ii = static_cast<std::uint64_t>(i);
    Matrix s(n, cfg.T + 1);
    for (int d = 0; d < n; ++d) s(d, 0) = detail::draw(cfg.initial, d, cfg.seed, ii, 0);
    for (int k = 0; k < cfg.T; ++k) {
      const Vector x = s.col(k);
      Vector z = cfg.C * x;
      for (int j = 0; j < z.size(); ++j) z[j] = cfg.a * std::tanh(z[j]);
      Vector next = cfg.A * x + cfg.B * z;
      for (int d = 0; d < n; ++d) next[d] += detail::draw(cfg.disturbance, d, cfg.seed, ii, static_cast<std::uint64_t>(k) + 1);
      s.col(k + 1) = next;
    }
    trs.emplace_back(std::move(s));
  }
  return TrajectoryBatch(std::move(trs), "benchmark seed=" + std::to_string(cfg.seed));
}

// ---------------------------------------------------------------------------
// Empirical estimators

struct ViolationComparison {
  double eps_hi = 1.0;
  bool pass = false;
};

struct ValidationReport {
  int n_test = 0;
  int violations = 0;
  double v_hat = 0.0;
  /// Number of test trajectories excluded at each timestep.
  std::vector<int> per_timestep;
  std::optional<ViolationComparison> comparison;
};

inline ValidationReport compare(ValidationReport r, double eps_hi) {
  r.comparison = ViolationComparison{eps_hi, r.v_hat <= eps_hi};
  return r;
}

namespace detail {

inline ValidationReport count_exclusions(const TubeParams& tube, const TrajectoryBatch& test,
                                         const std::vector<Vector>& offsets) {
  ValidationReport r;
  r.n_test = test.size();
  r.per_timestep.assign(static_cast<std::size_t>(tube.horizon() + 1), 0);
  for (const auto& x : test) {
    check_compatible(tube, x);
    bool out = false;
    for (int k = 0; k <= tube.horizon(); ++k) {
      const Vector xk = x.state(k);
      bool out_k = false;
      for (const auto& o : offsets) {
        if (margin(tube, k, xk + o) > 0.0) {
          out_k = true;
          break;
        }
      }
      if (out_k) {
        ++r.per_timestep[static_cast<std::size_t>(k)];
        out = true;
      }
    }
    if (out) ++r.violations;
  }
  r.v_hat = static_cast<double>(r.violations) / r.n_test;
  return r;
}

}  // namespace detail

inline ValidationReport empirical_violation(const TubeParams& tube, const TrajectoryBatch& test) {
  return detail::count_exclusions(tube, test, {Vector::Zero(tube.state_dim())});
}

inline ValidationReport empirical_adv_violation(const TubeParams& tube, const TrajectoryBatch& test,
                                                const PerturbationModel& model) {
  return detail::count_exclusions(tube, test, model.offsets_for(tube.state_dim()));
}

// ---------------------------------------------------------------------------
// Experiments

struct CoverageRow {
  int repeat = 0;
  bool ok = false;
  std::string error;
  int s_star = 0;
  double eps_lo = 0.0;
  double eps_hi = 1.0;
  double v_hat_adv = 0.0;
  bool pass = false;  // v_hat_adv <= eps_hi
};

/// Repeat r trains on seed derive_seed(cfg.seed, r, 0) and tests on
/// derive_seed(cfg.seed, r, 1).
inline std::vector<CoverageRow> coverage_experiment(const BenchmarkConfig& cfg, const FitConfig& fit_cfg, double beta,
                                                    int n_repeats, int N, int n_test,
                                                    double tol_active = kDefaultTolActive) {
  if (n_repeats < 1) throw InputError("n_repeats must be >= 1");
  if (N < 1 || n_test < 1) throw InputError("N and n_test must be >= 1");
  if (!(beta > 0.0 && beta < 1.0)) throw InputError("beta must lie in (0, 1)");
  std::vector<CoverageRow> rows;
  for (int r = 0; r < n_repeats; ++r) {
    CoverageRow row;
    row.repeat = r;
    try {
      BenchmarkConfig train = cfg, test = cfg;
      train.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r), 0);
      test.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r), 1);
      const auto batch = simulate_benchmark(train, N);
      const auto fitted = fit(batch, fit_cfg);
      const auto rep = adversarial_complexity(fitted, batch, fit_cfg.perturbation, tol_active);
      const auto cert = certificate(N, beta, rep);
      const auto val = empirical_adv_violation(fitted.tube, simulate_benchmark(test, n_test), fit_cfg.perturbation);
      row.ok = true;
      row.s_star = cert.s_star;
      row.eps_lo = cert.eps_lo;
      row.eps_hi = cert.eps_hi;
      row.v_hat_adv = val.v_hat;
      row.pass = val.v_hat <= cert.eps_hi;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct OodReport {
  bool ok = false;
  std::string error;
  Certificate certificate;
  ValidationReport shifted;
  bool pass = false;  // shifted.v_hat <= ood bound
};

/// Trains on the nominal distribution (seed derive_seed(nominal.seed, 0, 0)),
/// tests on the shifted one (seed derive_seed(shifted.seed, 0, 1)).
inline OodReport ood_experiment(const BenchmarkConfig& nominal, const BenchmarkConfig& shifted,
                                const FitConfig& fit_cfg, double beta, double mu_tilde, double R, int N, int n_test,
                                double tol_active = kDefaultTolActive) {
  if (nominal.state_dim() != shifted.state_dim() || nominal.T != shifted.T)
    throw InputError("nominal and shifted configurations differ in shape");
  OodReport out;
  try {
    BenchmarkConfig train = nominal, test = shifted;
    train.seed = derive_seed(nominal.seed, 0, 0);
    test.seed = derive_seed(shifted.seed, 0, 1);
    const auto batch = simulate_benchmark(train, N);
    const auto fitted = fit(batch, fit_cfg);
    const auto rep = adversarial_complexity(fitted, batch, fit_cfg.perturbation, tol_active);
    out.certificate = ood_bound(certificate(N, beta, rep), mu_tilde, R);
    out.shifted = compare(empirical_violation(fitted.tube, simulate_benchmark(test, n_test)), out.certificate.ood->bound);
    out.pass = out.shifted.comparison->pass;
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

struct SweepRow {
  double rho = 0.0;
  bool ok = false;
  std::string error;
  double size_total = 0.0;
  double size_rel = 0.0;
  double slack_total = 0.0;
  int s_star = 0;
  double eps_hi = 1.0;
  double v_hat_adv = 0.0;
};

/// One fit per rho on the batch drawn with cfg.seed; test data from
/// derive_seed(cfg.seed, 0, 1). size_rel is relative to the first entry.
inline std::vector<SweepRow> rho_sweep(const BenchmarkConfig& cfg, const FitConfig& fit_cfg,
                                       const std::vector<double>& rhos, double beta, int N, int n_test,
                                       double tol_active = kDefaultTolActive) {
  if (rhos.empty()) throw InputError("rho list must not be empty");
  for (std::size_t j = 1; j < rhos.size(); ++j)
    if (rhos[j] < rhos[j - 1]) throw InputError("rho list must be sorted ascending");
  const auto batch = simulate_benchmark(cfg, N);
  BenchmarkConfig tc = cfg;
  tc.seed = derive_seed(cfg.seed, 0, 1);
  const auto test = simulate_benchmark(tc, n_test);
  std::vector<SweepRow> rows;
  double base = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t j = 0; j < rhos.size(); ++j) {
    SweepRow row;
    row.rho = rhos[j];
    try {
      FitConfig fc = fit_cfg;
      fc.rho = rhos[j];
      const auto fitted = fit(batch, fc);
      const auto proxy = fc.proxy.value_or(default_proxy(fc.geometry));
      row.size_total = size_report(fitted.tube, proxy).total;
      for (double s : fitted.slacks) row.slack_total += s;
      const auto rep = adversarial_complexity(fitted, batch, fc.perturbation, tol_active);
      const auto cert = certificate(N, beta, rep);
      row.s_star = cert.s_star;
      row.eps_hi = cert.eps_hi;
      row.v_hat_adv = empirical_adv_violation(fitted.tube, test, fc.perturbation).v_hat;
      if (j == 0) base = row.size_total;
      row.size_rel = row.size_total / base;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace scenreach
