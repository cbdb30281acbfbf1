// Acceptance run: one PASS/FAIL line per criterion, tolerances in the line.
// Also written to acceptance_report.txt in the working directory.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "brute_force.hpp"
#include "exact_epsilon.hpp"
#include "scenreach/cli.hpp"

namespace {

using namespace scenreach;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 -------------------------------------------------------------------------

Outcome epsilon_vs_exact() {
  const std::vector<std::pair<std::string, double>> betas{{"1e-2", 1e-2}, {"1e-3", 1e-3}, {"1e-6", 1e-6}};
  double worst = 0.0, lib_time = 0.0;
  int cases = 0;
  for (int N : {50, 100, 500})
    for (int nu : {0, 1, 5, 10, N / 10})
      for (const auto& [text, beta] : betas) {
        const auto t0 = Clock::now();
        const auto got = epsilon_roots(N, nu, beta);
        lib_time += seconds_since(t0);
        const auto ref = exact::epsilon(N, nu, exact::parse_beta(text));
        worst = std::max({worst, std::abs(got.eps_lo - ref.eps_lo), std::abs(got.eps_hi - ref.eps_hi)});
        ++cases;
      }
  return {worst <= 1e-9 && lib_time < 10.0,
          fmt("%d grid points, max |library - exact| = %.2e (tol 1e-9), library time %.2f s (limit 10 s)", cases, worst,
              lib_time)};
}

// 2 -------------------------------------------------------------------------

Outcome epsilon_monotonicity() {
  constexpr double kSlack = 1e-12;
  const std::vector<int> Ns{50, 100, 500, 1000};
  int violations = 0, evaluated = 0;
  for (double beta : {1e-2, 1e-3, 1e-6}) {
    std::vector<std::vector<EpsilonInterval>> table;
    for (int N : Ns) {
      std::vector<EpsilonInterval> row;
      for (int nu = 0; nu <= N; ++nu) {
        row.push_back(epsilon_roots(N, nu, beta));
        ++evaluated;
        const auto& e = row.back();
        if (nu < N && e.eps_lo > e.eps_hi + kSlack) ++violations;
        if (nu > 0 && e.eps_hi < row[static_cast<std::size_t>(nu - 1)].eps_hi - kSlack) ++violations;
      }
      table.push_back(std::move(row));
    }
    for (std::size_t a = 1; a < Ns.size(); ++a)
      for (int nu = 0; nu <= Ns[a - 1]; ++nu)
        if (table[a][static_cast<std::size_t>(nu)].eps_hi > table[a - 1][static_cast<std::size_t>(nu)].eps_hi + kSlack)
          ++violations;
  }
  return {violations == 0,
          fmt("%d intervals over N in {50,100,500,1000}, all nu, 3 betas: %d violations (slack 1e-12)", evaluated,
              violations)};
}

// 3 -------------------------------------------------------------------------

struct TinyCase {
  brute::Instance inst;
  TrajectoryBatch batch;
  FitConfig cfg;
};

TinyCase tiny_case(std::mt19937_64& rng, brute::Shape shape) {
  std::normal_distribution<double> Z;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  brute::Instance in;
  in.n = 1 + static_cast<int>(rng() % 2);
  in.T = static_cast<int>(rng() % 3);
  int N = 1 + static_cast<int>(rng() % 4);
  in.gamma = rng() % 2 ? 0.0 : 0.02 + 0.2 * U(rng);
  // a single unperturbed sample leaves the log-det program unbounded
  if (shape == brute::Shape::logdet) N = std::max(N, 2);
  in.rho = std::exp(std::log(0.2) + U(rng) * std::log(15.0));
  std::vector<Trajectory> trs;
  for (int i = 0; i < N; ++i) {
    Matrix x(in.n, in.T + 1);
    for (Eigen::Index a = 0; a < x.size(); ++a) x.data()[a] = Z(rng);
    in.data.push_back(x);
    trs.emplace_back(x);
  }
  FitConfig cfg;
  cfg.rho = in.rho;
  cfg.perturbation = in.gamma > 0 ? PerturbationModel::uniform_box(in.n, in.gamma) : PerturbationModel::none();
  for (int k = 0; k <= in.T; ++k) {
    if (shape == brute::Shape::ellipsoid) {
      const Matrix A = Matrix::NullaryExpr(in.n, in.n, [&] { return Z(rng); });
      in.shapes.push_back(A * A.transpose() + 0.3 * Matrix::Identity(in.n, in.n));
    } else if (shape == brute::Shape::zonotope) {
      const int m = in.n + static_cast<int>(rng() % 2);
      Matrix G = Matrix::NullaryExpr(in.n, m, [&] { return 0.5 * Z(rng); });
      G.leftCols(in.n) += Matrix::Identity(in.n, in.n);
      in.shapes.push_back(G);
    }
  }
  cfg.shapes = in.shapes;
  switch (shape) {
    case brute::Shape::ball_l1:
      cfg.p = NormKind::l1;
      break;
    case brute::Shape::ball_l2:
      cfg.p = NormKind::l2;
      break;
    case brute::Shape::ball_linf:
      cfg.p = NormKind::linf;
      break;
    case brute::Shape::ellipsoid:
      cfg.geometry = Geometry::ellipsoid_fixed;
      break;
    case brute::Shape::logdet:
      cfg.geometry = Geometry::ellipsoid_logdet;
      break;
    case brute::Shape::zonotope:
      cfg.geometry = Geometry::zonotope;
      break;
  }
  return {std::move(in), TrajectoryBatch(std::move(trs)), cfg};
}

Outcome fit_vs_brute_force() {
  constexpr int kPerGeometry = 60;
  constexpr double kTol = 1e-3;
  std::mt19937_64 rng(20240601);
  struct Group {
    const char* name;
    std::vector<brute::Shape> shapes;
  };
  const std::vector<Group> groups{
      {"ball", {brute::Shape::ball_l1, brute::Shape::ball_l2, brute::Shape::ball_linf}},
      {"ellipsoid-fixed", {brute::Shape::ellipsoid}},
      {"ellipsoid-logdet", {brute::Shape::logdet}},
      {"zonotope", {brute::Shape::zonotope}},
  };
  bool pass = true;
  std::ostringstream os;
  for (const auto& g : groups) {
    int matched = 0, inconclusive = 0;
    double worst = 0.0;
    for (int r = 0; r < kPerGeometry; ++r) {
      const auto shape = g.shapes[static_cast<std::size_t>(r) % g.shapes.size()];
      const auto tc = tiny_case(rng, shape);
      const auto ref = brute::optimum(tc.inst, shape);
      if (!ref.ok || ref.upper - ref.lower > 1e-4) {
        ++inconclusive;
        continue;
      }
      double lib = 0.0;
      try {
        lib = fit(tc.batch, tc.cfg).objective_value;
      } catch (const std::exception&) {
        continue;
      }
      const double err = std::max({0.0, ref.lower - lib, lib - ref.upper});
      worst = std::max(worst, err);
      matched += err <= kTol;
    }
    const bool ok = matched == kPerGeometry;
    pass = pass && ok;
    os << g.name << " " << matched << "/" << kPerGeometry << " (max err " << fmt("%.1e", worst) << ")"
       << (inconclusive ? fmt(", %d oracle inconclusive", inconclusive) : std::string()) << "; ";
  }

  // 1-D pair at +-1: r + 2 rho max(0, 1 - r) switches from r = 0 to r = 1 at rho = 1/2
  std::vector<Trajectory> two;
  two.emplace_back(Matrix::Constant(1, 1, -1.0));
  two.emplace_back(Matrix::Constant(1, 1, 1.0));
  const TrajectoryBatch pair(std::move(two));
  FitConfig c;
  c.rho = 0.49;
  const double r_below = fit_ball_radius(pair, c).tube.as_ball().steps[0].radius;
  c.rho = 0.51;
  const double r_above = fit_ball_radius(pair, c).tube.as_ball().steps[0].radius;
  const bool threshold = std::abs(r_below) <= 1e-4 && std::abs(r_above - 1.0) <= 1e-4;
  pass = pass && threshold;
  os << fmt("threshold r(0.49)=%.2e r(0.51)=%.6f (tol 1e-4); objective tol %.0e", r_below, r_above, kTol);
  return {pass, os.str()};
}

// 4 -------------------------------------------------------------------------

FitConfig geometry_cfg(Geometry g) {
  FitConfig f;
  f.geometry = g;
  f.perturbation = PerturbationModel::uniform_box(2, kPresetGamma);
  return f;
}

const char* geometry_name(Geometry g) {
  switch (g) {
    case Geometry::ball:
      return "ball";
    case Geometry::ellipsoid_fixed:
      return "ellipsoid";
    case Geometry::ellipsoid_logdet:
      return "ellipsoid-logdet";
    case Geometry::zonotope:
      return "zonotope";
  }
  return "?";
}

Outcome scalarization_monotonicity() {
  constexpr double kRel = 1e-6;
  auto sys = preset(Preset::sec6a);
  sys.T = 10;
  const auto t0 = Clock::now();
  bool pass = true;
  std::ostringstream os;
  for (Geometry g : {Geometry::ball, Geometry::ellipsoid_fixed, Geometry::zonotope}) {
    const auto rows = rho_sweep(sys, geometry_cfg(g), {0.5, 1.0, 2.0, 5.0}, 1e-3, 200, 200);
    bool ok = true;
    for (const auto& r : rows) ok = ok && r.ok;
    for (std::size_t j = 1; ok && j < rows.size(); ++j) {
      const auto& a = rows[j - 1];
      const auto& b = rows[j];
      if (b.size_total < a.size_total - kRel * std::max(1.0, a.size_total)) ok = false;
      if (b.slack_total > a.slack_total + kRel * std::max(1.0, a.slack_total)) ok = false;
    }
    pass = pass && ok;
    os << geometry_name(g) << (ok ? " ok" : " VIOLATED") << " size";
    for (const auto& r : rows) os << fmt(" %.4f", r.size_total);
    os << " slack";
    for (const auto& r : rows) os << fmt(" %.4f", r.slack_total);
    os << "; ";
  }
  const double dt = seconds_since(t0);
  pass = pass && dt < 300.0;
  os << fmt("rel tol %.0e, %.0f s (limit 300 s)", kRel, dt);
  return {pass, os.str()};
}

// 5 -------------------------------------------------------------------------

Outcome coverage() {
  auto sys = preset(Preset::sec6a);
  sys.T = 10;
  const auto t0 = Clock::now();
  bool pass = true;
  std::ostringstream os;
  for (Geometry g : {Geometry::ball, Geometry::ellipsoid_fixed, Geometry::zonotope}) {
    const auto rows = coverage_experiment(sys, geometry_cfg(g), 1e-3, 20, 200, 2000);
    int below = 0, failed = 0;
    double max_ratio = 0.0;
    for (const auto& r : rows) {
      if (!r.ok) {
        ++failed;
        continue;
      }
      below += r.pass;
      max_ratio = std::max(max_ratio, r.v_hat_adv / r.eps_hi);
    }
    pass = pass && below >= 19;
    os << geometry_name(g) << " " << below << "/20" << (failed ? fmt(" (%d failed)", failed) : std::string())
       << fmt(" max v/eps %.3f", max_ratio) << "; ";
  }
  const double dt = seconds_since(t0);
  pass = pass && dt < 900.0;
  os << fmt("need >= 19/20 with v_hat_adv <= eps_hi; %.0f s (limit 900 s)", dt);
  return {pass, os.str()};
}

// 6 -------------------------------------------------------------------------

Outcome ood() {
  const auto t0 = Clock::now();
  const auto nominal = preset(Preset::sec6b), shifted = preset(Preset::sec6b_shifted);
  const auto fc = geometry_cfg(Geometry::ball);
  const double R = fc.perturbation.metric_radius();
  int below = 0;
  std::ostringstream os;
  for (int e = 0; e < 5; ++e) {
    BenchmarkConfig nom = nominal, sh = shifted;
    nom.seed = sh.seed = derive_seed(0, static_cast<std::uint64_t>(e), 2);
    const auto rep = ood_experiment(nom, sh, fc, 1e-3, kPresetMuTilde, R, 300, 1500);
    if (!rep.ok) {
      os << "exp " << e << " failed (" << rep.error << "); ";
      continue;
    }
    below += rep.pass;
    os << fmt("v=%.4f<=%.4f; ", rep.shifted.v_hat, rep.certificate.ood->raw);
  }
  const double dt = seconds_since(t0);
  os << fmt("%d/5 below eps_hi + mu/R (mu=%.4f, R=%.2f); %.0f s (limit 900 s)", below, kPresetMuTilde, R, dt);
  return {below == 5 && dt < 900.0, os.str()};
}

// 7 -------------------------------------------------------------------------

Outcome ellipsoid_identity_is_ball() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> Z;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double tol = 2.0 * conic::kDefaultTol;
  double worst = 0.0;
  for (int r = 0; r < 20; ++r) {
    const int N = 2 + static_cast<int>(rng() % 29), T = static_cast<int>(rng() % 4), n = 2;
    std::vector<Trajectory> trs;
    for (int i = 0; i < N; ++i) trs.emplace_back(Matrix::NullaryExpr(n, T + 1, [&] { return Z(rng); }));
    const TrajectoryBatch batch(std::move(trs));
    FitConfig fc;
    fc.rho = std::exp(std::log(0.2) + U(rng) * std::log(25.0));
    if (rng() % 2) fc.perturbation = PerturbationModel::uniform_box(n, 0.05 * U(rng));
    const auto ball = fit_ball_radius(batch, fc);
    fc.geometry = Geometry::ellipsoid_fixed;
    fc.shapes = {Matrix::Identity(n, n)};
    const auto ell = fit_ellipsoid_fixed(batch, fc);
    worst = std::max(worst, std::abs(ball.objective_value - ell.objective_value));
    for (int k = 0; k <= T; ++k) {
      const auto& b = ball.tube.as_ball().steps[static_cast<std::size_t>(k)];
      const auto& e = ell.tube.as_ellipsoid().steps[static_cast<std::size_t>(k)];
      worst = std::max({worst, std::abs(b.radius - e.scale), (b.center - e.center).lpNorm<Eigen::Infinity>()});
    }
    for (int i = 0; i < N; ++i)
      worst = std::max(worst, std::abs(ball.slacks[static_cast<std::size_t>(i)] - ell.slacks[static_cast<std::size_t>(i)]));
  }
  return {worst <= tol, fmt("20 instances, max parameter/objective difference %.2e (tol %.0e)", worst, tol)};
}

// 8 -------------------------------------------------------------------------

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "scenreach_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  std::ostringstream sink;
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"data.csv", {"simulate", "--N", "60", "--T", "4", "--seed", "3", "--out", "@"}},
      {"ball.json", {"fit", "--data", p("data.csv"), "--geometry", "ball", "--out", "@"}},
      {"ellipsoid.json", {"fit", "--data", p("data.csv"), "--geometry", "ellipsoid-fixed", "--out", "@"}},
      {"logdet.json", {"fit", "--data", p("data.csv"), "--geometry", "ellipsoid-logdet", "--out", "@"}},
      {"zonotope.json", {"fit", "--data", p("data.csv"), "--geometry", "zonotope", "--rho", "5", "--out", "@"}},
      {"certified.json", {"certify", "--results", p("ball.json"), "--mu-tilde", "0.0243", "--R", "0.03", "--out", "@"}},
      {"validate.csv", {"validate", "--T", "3", "--N", "50", "--n-test", "300", "--repeats", "3", "--out", "@"}},
      {"sweep.csv", {"sweep", "--T", "3", "--N", "50", "--n-test", "300", "--out", "@"}},
      {"epsilon.csv", {"epsilon", "--N", "50,100", "--out", "@"}},
      {"ood.csv", {"ood", "--T", "3", "--N", "50", "--n-test", "300", "--experiments", "2", "--out", "@"}},
  };
  int identical = 0, failed = 0;
  std::string first_diff;
  for (const auto& [name, args] : commands) {
    std::string outputs[2];
    for (int rep = 0; rep < 2; ++rep) {
      auto a = args;
      for (auto& s : a)
        if (s == "@") s = p(name);
      if (cli::run(a, sink, sink) != cli::kOk) {
        ++failed;
        break;
      }
      outputs[rep] = io::read_file(p(name));
    }
    if (outputs[0] == outputs[1] && !outputs[0].empty())
      ++identical;
    else if (first_diff.empty())
      first_diff = name;
  }
  fs::remove_all(dir);
  const int total = static_cast<int>(commands.size());
  return {identical == total,
          fmt("%d/%d command outputs byte-identical across repeated runs%s%s", identical, total,
              failed ? fmt(", %d runs failed", failed).c_str() : "",
              first_diff.empty() ? "" : (", first mismatch " + first_diff).c_str())};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"1 epsilon roots vs exact rational bisection", epsilon_vs_exact},
      {"2 epsilon monotonicity grid", epsilon_monotonicity},
      {"3 fit optimality vs brute force", fit_vs_brute_force},
      {"4 scalarization monotonicity (sec6a, N=200, T=10)", scalarization_monotonicity},
      {"5 coverage, 20 repeats (N=200, T=10, beta=1e-3)", coverage},
      {"6 shifted-distribution bound, 5 experiments (N=300)", ood},
      {"7 ellipsoid with H=I equals Euclidean ball", ellipsoid_identity_is_ball},
      {"8 byte-identical CLI outputs", determinism},
  };
  std::ofstream report("acceptance_report.txt");
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + "  criterion " + c.name + ": " + o.detail +
                             fmt(" [%.1f s]", seconds_since(t0));
    std::cout << line << std::endl;
    report << line << "\n";
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
