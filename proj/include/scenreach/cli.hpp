#pragma once

// Command-line driver: simulate / fit / certify / validate / sweep / epsilon /
// ood. run() is callable in-process so tests can drive the commands.
//
// Exit codes: 0 ok, 2 usage or configuration, 3 I/O, 4 solver or numerics.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scenreach/certify.hpp"
#include "scenreach/fit.hpp"
#include "scenreach/io.hpp"
#include "scenreach/simulate.hpp"

namespace scenreach::cli {

using io::json;

enum ExitCode { kOk = 0, kUsage = 2, kIo = 3, kSolver = 4 };

/// Settings shared by the commands. A --config file supplies a JSON object
/// with any of these keys; explicit flags override it.
struct RunConfig {
  std::optional<std::string> preset;  // command default when unset
  json system = json::object();   // overrides on top of the preset
  json shifted = json::object();  // ood: overrides on top of the shifted preset
  json fit = json::object();      // FitConfig fields
  std::optional<int> T;
  int N = 200;
  int n_test = 2000;
  int repeats = 20;
  int experiments = 5;
  double beta = 1e-3;
  double gamma = kPresetGamma;
  std::vector<double> rhos;  // empty: 1 for single fits, the standard sweep list for sweep
  double tol_active = kDefaultTolActive;
  double mu_tilde = kPresetMuTilde;
  std::optional<double> R;
  std::uint64_t seed = 0;
};

inline Preset parse_preset(const std::string& s) {
  if (s == "paper-sec6a") return Preset::sec6a;
  if (s == "paper-sec6b") return Preset::sec6b;
  throw ConfigError("unknown preset '" + s + "' (expected paper-sec6a|paper-sec6b)");
}

/// Flag values captured from the command line; unset ones leave the config alone.
struct Flags {
  std::string config, preset, geometry, p, proxy, out, data, results;
  std::vector<double> rho;
  std::vector<int> Ns, nus;
  double beta = 0, gamma = 0, tol_active = 0, mu_tilde = 0, R = 0, tol = 0;
  int N = 0, T = 0, n_test = 0, repeats = 0, experiments = 0;
  std::uint64_t seed = 0;
};

class Driver {
 public:
  Driver(std::ostream& out, std::ostream& log) : out_(out), log_(log) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"scenreach: scenario-based reachable tube estimation with a-posteriori certificates"};
    app.require_subcommand(1);
    app.set_version_flag("--version", io::kToolVersion);

    auto* sim = app.add_subcommand("simulate", "sample benchmark trajectories to CSV");
    add_system_flags(sim);
    sim->add_option("--N", f_.N, "number of trajectories (default 1000)");
    sim->add_option("--out", f_.out, "output CSV")->required();

    auto* fitc = app.add_subcommand("fit", "fit a tube to a trajectory CSV");
    fitc->add_option("--data", f_.data, "trajectory CSV")->required();
    fitc->add_option("--config", f_.config, "JSON configuration");
    add_fit_flags(fitc);
    fitc->add_option("--out", f_.out, "results JSON")->required();

    auto* cert = app.add_subcommand("certify", "attach complexity and certificate to a results document");
    cert->add_option("--results", f_.results, "results JSON from fit")->required();
    cert->add_option("--beta", f_.beta, "confidence parameter in (0,1)");
    cert->add_option("--tol-active", f_.tol_active, "activity tolerance");
    cert->add_option("--mu-tilde", f_.mu_tilde, "Wasserstein shift radius");
    cert->add_option("--R", f_.R, "perturbation radius for the shift bound");
    cert->add_option("--out", f_.out, "output JSON (default: overwrite --results)");

    auto* val = app.add_subcommand("validate", "coverage experiment table");
    add_system_flags(val);
    add_fit_flags(val);
    add_experiment_flags(val);
    val->add_option("--repeats", f_.repeats, "independent repeats");
    val->add_option("--out", f_.out, "output CSV (default stdout)");

    auto* swp = app.add_subcommand("sweep", "rho sweep table");
    add_system_flags(swp);
    add_fit_flags(swp);
    add_experiment_flags(swp);
    swp->add_option("--out", f_.out, "output CSV (default stdout)");

    auto* eps = app.add_subcommand("epsilon", "violation-interval grid");
    eps->add_option("--N", f_.Ns, "sample sizes")->delimiter(',')->required();
    eps->add_option("--nu", f_.nus, "complexities (default 0..N)")->delimiter(',');
    eps->add_option("--beta", f_.beta, "confidence parameter in (0,1)");
    eps->add_option("--out", f_.out, "output CSV (default stdout)");

    auto* ood = app.add_subcommand("ood", "shifted-distribution experiment table");
    add_system_flags(ood);
    add_fit_flags(ood);
    add_experiment_flags(ood);
    ood->add_option("--experiments", f_.experiments, "independent experiments");
    ood->add_option("--mu-tilde", f_.mu_tilde, "Wasserstein shift radius");
    ood->add_option("--R", f_.R, "perturbation radius (default gamma)");
    ood->add_option("--out", f_.out, "output CSV (default stdout)");

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      std::ostringstream o, l;
      const int code = app.exit(e, o, l);
      out_ << o.str();
      log_ << l.str();
      return code == 0 ? kOk : kUsage;
    }

    try {
      if (*sim) return cmd_simulate(*sim);
      if (*fitc) return cmd_fit(*fitc);
      if (*cert) return cmd_certify(*cert);
      if (*val) return cmd_validate(*val);
      if (*swp) return cmd_sweep(*swp);
      if (*eps) return cmd_epsilon(*eps);
      if (*ood) return cmd_ood(*ood);
    } catch (const IoError& e) {
      log_ << "error: " << e.what() << "\n";
      return kIo;
    } catch (const NumericalError& e) {
      log_ << "error: " << e.what() << "\n";
      return kSolver;
    } catch (const InputError& e) {
      log_ << "error: " << e.what() << "\n";
      return kUsage;
    } catch (const ConfigError& e) {
      log_ << "error: " << e.what() << "\n";
      return kUsage;
    } catch (const json::exception& e) {
      log_ << "error: " << e.what() << "\n";
      return kUsage;
    }
    return kUsage;
  }

 private:
  void add_system_flags(CLI::App* c) {
    c->add_option("--config", f_.config, "JSON configuration");
    c->add_option("--preset", f_.preset, "paper-sec6a|paper-sec6b");
    c->add_option("--seed", f_.seed, "base seed");
    c->add_option("--T", f_.T, "horizon (default from preset)");
  }

  void add_fit_flags(CLI::App* c) {
    c->add_option("--geometry", f_.geometry, "ball|ellipsoid-fixed|ellipsoid-logdet|zonotope");
    c->add_option("--p", f_.p, "ball norm: 1|2|inf");
    c->add_option("--rho", f_.rho, "slack price (list for sweep)")->delimiter(',');
    c->add_option("--gamma", f_.gamma, "box perturbation radius");
    c->add_option("--proxy", f_.proxy, "size proxy override");
    c->add_option("--tol", f_.tol, "solver tolerance");
  }

  void add_experiment_flags(CLI::App* c) {
    c->add_option("--N", f_.N, "training trajectories");
    c->add_option("--n-test", f_.n_test, "test trajectories");
    c->add_option("--beta", f_.beta, "confidence parameter in (0,1)");
    c->add_option("--tol-active", f_.tol_active, "activity tolerance");
  }

  static bool given(const CLI::App& c, const char* name) {
    const auto* o = c.get_option_no_throw(name);
    return o != nullptr && o->count() > 0;
  }

  RunConfig load(const CLI::App& c) const {
    RunConfig rc;
    if (given(c, "--config")) {
      json j;
      try {
        j = json::parse(io::read_file(f_.config));
      } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
      if (!j.is_object()) throw ConfigError("config must be a JSON object");
      static const char* known[] = {"preset", "system", "shifted", "fit", "T", "N", "n_test", "repeats", "experiments",
                                    "beta", "gamma", "rho", "tol_active", "mu_tilde", "R", "seed"};
      for (const auto& [k, v] : j.items()) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* s) { return k == s; }) == std::end(known))
          throw ConfigError("config: unknown key '" + k + "'");
      }
      if (j.contains("preset")) rc.preset = j["preset"].get<std::string>();
      if (j.contains("system")) rc.system = j["system"];
      if (j.contains("shifted")) rc.shifted = j["shifted"];
      if (j.contains("fit")) rc.fit = j["fit"];
      if (j.contains("T")) rc.T = j["T"].get<int>();
      if (j.contains("N")) rc.N = j["N"].get<int>();
      if (j.contains("n_test")) rc.n_test = j["n_test"].get<int>();
      if (j.contains("repeats")) rc.repeats = j["repeats"].get<int>();
      if (j.contains("experiments")) rc.experiments = j["experiments"].get<int>();
      if (j.contains("beta")) rc.beta = j["beta"].get<double>();
      if (j.contains("gamma")) rc.gamma = j["gamma"].get<double>();
      if (j.contains("rho")) rc.rhos = j["rho"].is_array() ? j["rho"].get<std::vector<double>>()
                                                           : std::vector<double>{j["rho"].get<double>()};
      if (j.contains("tol_active")) rc.tol_active = j["tol_active"].get<double>();
      if (j.contains("mu_tilde")) rc.mu_tilde = j["mu_tilde"].get<double>();
      if (j.contains("R")) rc.R = j["R"].get<double>();
      if (j.contains("seed")) rc.seed = j["seed"].get<std::uint64_t>();
    }
    if (given(c, "--preset")) rc.preset = f_.preset;
    if (given(c, "--T")) rc.T = f_.T;
    if (given(c, "--N")) rc.N = f_.N;
    if (given(c, "--n-test")) rc.n_test = f_.n_test;
    if (given(c, "--repeats")) rc.repeats = f_.repeats;
    if (given(c, "--experiments")) rc.experiments = f_.experiments;
    if (given(c, "--beta")) rc.beta = f_.beta;
    if (given(c, "--gamma")) rc.gamma = f_.gamma;
    if (given(c, "--rho")) rc.rhos = f_.rho;
    if (given(c, "--tol-active")) rc.tol_active = f_.tol_active;
    if (given(c, "--mu-tilde")) rc.mu_tilde = f_.mu_tilde;
    if (given(c, "--R")) rc.R = f_.R;
    if (given(c, "--seed")) rc.seed = f_.seed;
    if (given(c, "--geometry")) rc.fit["geometry"] = f_.geometry;
    if (given(c, "--p")) rc.fit["p"] = f_.p;
    if (given(c, "--proxy")) rc.fit["proxy"] = f_.proxy;
    if (given(c, "--tol")) rc.fit["tol"] = f_.tol;
    if (!(rc.beta > 0.0 && rc.beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
    if (!(rc.gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
    return rc;
  }

  static BenchmarkConfig system_of(const RunConfig& rc, bool shifted = false) {
    const std::string name = rc.preset.value_or(shifted ? "paper-sec6b" : "paper-sec6a");
    BenchmarkConfig b = preset(parse_preset(name));
    if (shifted) {
      if (name != "paper-sec6b" && rc.shifted.empty())
        throw ConfigError("ood needs preset paper-sec6b or a 'shifted' system in the config");
      b = io::benchmark_from_json(rc.system, b);
      if (name == "paper-sec6b") {
        const auto s = preset(Preset::sec6b_shifted);
        b.initial = s.initial;
        b.disturbance = s.disturbance;
      }
      b = io::benchmark_from_json(rc.shifted, b);
    } else {
      b = io::benchmark_from_json(rc.system, b);
    }
    if (rc.T) b.T = *rc.T;
    b.seed = rc.seed;
    b.validate();
    return b;
  }

  /// Fit settings; a box perturbation of radius gamma unless the fit block
  /// names one explicitly.
  static FitConfig fit_of(const RunConfig& rc, int n) {
    FitConfig fc = io::fit_config_from_json(rc.fit);
    if (!rc.fit.contains("perturbation"))
      fc.perturbation = rc.gamma > 0.0 ? PerturbationModel::uniform_box(n, rc.gamma) : PerturbationModel::none();
    if (rc.rhos.size() > 1) throw ConfigError("this command takes a single rho");
    if (rc.rhos.size() == 1) fc.rho = rc.rhos.front();
    return fc;
  }

  void emit(const std::string& text) {
    if (f_.out.empty())
      out_ << text;
    else
      io::write_file(f_.out, text);
  }

  int cmd_simulate(const CLI::App& c) {
    RunConfig rc = load(c);
    const int N = given(c, "--N") ? f_.N : 1000;
    const auto sys = system_of(rc);
    const auto batch = simulate_benchmark(sys, N);
    io::write_file(f_.out, io::trajectories_to_csv(batch));
    log_ << "N=" << batch.size() << " T=" << batch.horizon() << " n_x=" << batch.state_dim() << "\n";
    return kOk;
  }

  int cmd_fit(const CLI::App& c) {
    RunConfig rc = load(c);
    const auto batch = io::trajectories_from_csv(io::read_file(f_.data), f_.data);
    const FitConfig fc = fit_of(rc, batch.state_dim());
    json config = {{"fit", io::to_json(fc)}, {"training_data", f_.data}};
    json doc;
    doc["provenance"] = io::provenance("fit", config, rc.seed);
    doc["config"] = config;
    doc["training_data"] = {{"path", f_.data}, {"N", batch.size()}, {"T", batch.horizon()}, {"n_x", batch.state_dim()}};
    try {
      const auto r = fit(batch, fc);
      const auto proxy = fc.proxy.value_or(default_proxy(fc.geometry));
      const auto size = size_report(r.tube, proxy);
      double slack_total = 0.0;
      for (double s : r.slacks) slack_total += s;
      doc["fit"] = {{"tube", io::to_json(r.tube)},
                    {"slacks", r.slacks},
                    {"objective_value", r.objective_value},
                    {"per_trajectory_worst_margin", r.per_trajectory_worst_margin},
                    {"size", {{"proxy", io::name_of(io::kProxyNames, proxy)}, {"per_k", size.per_k}, {"total", size.total}}},
                    {"slack_total", slack_total},
                    {"diagnostics", io::to_json(r.diagnostics)}};
      io::write_file(f_.out, io::dump(doc));
      log_ << "size_total=" << io::format_double(size.total) << " slack_total=" << io::format_double(slack_total) << "\n";
      return kOk;
    } catch (const NumericalError& e) {
      doc["fit"] = {{"error", e.what()}};
      io::write_file(f_.out, io::dump(doc));
      log_ << "error: " << e.what() << "\n";
      return kSolver;
    }
  }

  int cmd_certify(const CLI::App& c) {
    json doc;
    try {
      doc = json::parse(io::read_file(f_.results));
    } catch (const json::parse_error& e) {
      throw InputError(std::string("results: ") + e.what());
    }
    const json& fitj = io::require(doc, "fit");
    if (fitj.contains("error")) throw InputError("results document holds a failed fit");
    const json& cfg = io::require(doc, "config");
    const FitConfig fc = io::fit_config_from_json(io::require(cfg, "fit"));
    const std::string data = io::require(io::require(doc, "training_data"), "path").get<std::string>();
    const auto batch = io::trajectories_from_csv(io::read_file(data), data);

    double beta = given(c, "--beta") ? f_.beta : 1e-3;
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
    const double tol_active = given(c, "--tol-active") ? f_.tol_active : kDefaultTolActive;
    if (given(c, "--mu-tilde") != given(c, "--R")) throw ConfigError("--mu-tilde and --R go together");

    FitResult r{io::tube_from_json(io::require(fitj, "tube")), io::require(fitj, "slacks").get<std::vector<double>>(),
                io::require(fitj, "objective_value").get<double>(), {}, {}};
    const auto rep = adversarial_complexity(r, batch, fc.perturbation, tol_active);
    Certificate cert = certificate(batch.size(), beta, rep);
    if (given(c, "--mu-tilde")) cert = ood_bound(cert, f_.mu_tilde, f_.R);

    doc["complexity"] = io::to_json(rep);
    doc["certificate"] = io::to_json(cert);
    json certify_cfg = {{"beta", beta}, {"tol_active", tol_active}};
    if (cert.ood) certify_cfg["ood"] = {{"mu_tilde", f_.mu_tilde}, {"R", f_.R}};
    doc["config"]["certify"] = certify_cfg;
    doc["provenance"] = io::provenance("certify", doc["config"], doc["provenance"].value("seed", std::uint64_t{0}));
    io::write_file(f_.out.empty() ? f_.results : f_.out, io::dump(doc));
    log_ << "s_star=" << cert.s_star << " eps_lo=" << io::format_double(cert.eps_lo)
         << " eps_hi=" << io::format_double(cert.eps_hi) << (cert.vacuous ? " (vacuous upper bound)" : "") << "\n";
    return kOk;
  }

  int cmd_validate(const CLI::App& c) {
    RunConfig rc = load(c);
    const auto sys = system_of(rc);
    const auto fc = fit_of(rc, sys.state_dim());
    const auto rows = coverage_experiment(sys, fc, rc.beta, rc.repeats, rc.N, rc.n_test, rc.tol_active);
    io::Table t({"repeat", "s_star", "eps_lo", "eps_hi", "v_hat_adv"});
    int failed = 0, passed = 0;
    for (const auto& r : rows) {
      if (!r.ok) {
        ++failed;
        log_ << "repeat " << r.repeat << " failed: " << r.error << "\n";
        continue;
      }
      passed += r.pass ? 1 : 0;
      t.row().add(r.repeat).add(r.s_star).add(r.eps_lo).add(r.eps_hi).add(r.v_hat_adv);
    }
    emit(t.str());
    log_ << "v_hat_adv <= eps_hi in " << passed << "/" << rows.size() << " repeats\n";
    return failed == static_cast<int>(rows.size()) ? kSolver : kOk;
  }

  int cmd_sweep(const CLI::App& c) {
    RunConfig rc = load(c);
    const auto sys = system_of(rc);
    const auto rhos = rc.rhos.empty() ? std::vector<double>{0.5, 1.0, 2.0, 5.0} : rc.rhos;
    RunConfig single = rc;
    single.rhos.clear();
    const auto fc = fit_of(single, sys.state_dim());
    const auto rows = rho_sweep(sys, fc, rhos, rc.beta, rc.N, rc.n_test, rc.tol_active);
    io::Table t({"rho", "size_total", "size_rel", "s_star", "eps_hi", "v_hat_adv"});
    int failed = 0;
    for (const auto& r : rows) {
      if (!r.ok) {
        ++failed;
        log_ << "rho " << io::format_double(r.rho) << " failed: " << r.error << "\n";
        continue;
      }
      t.row().add(r.rho).add(r.size_total).add(r.size_rel).add(r.s_star).add(r.eps_hi).add(r.v_hat_adv);
    }
    emit(t.str());
    return failed == static_cast<int>(rows.size()) ? kSolver : kOk;
  }

  int cmd_epsilon(const CLI::App& c) {
    const double beta = given(c, "--beta") ? f_.beta : 1e-3;
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
    io::Table t({"N", "nu", "beta", "eps_lo", "eps_hi"});
    for (int N : f_.Ns) {
      if (N < 1) throw ConfigError("N must be >= 1");
      std::vector<int> nus = f_.nus;
      if (nus.empty())
        for (int nu = 0; nu <= N; ++nu) nus.push_back(nu);
      for (int nu : nus) {
        if (nu < 0 || nu > N) throw ConfigError("nu must lie in [0, N]");
        const auto e = epsilon_roots(N, nu, beta);
        t.row().add(N).add(nu).add(beta).add(e.eps_lo).add(e.eps_hi);
      }
    }
    emit(t.str());
    return kOk;
  }

  int cmd_ood(const CLI::App& c) {
    RunConfig rc = load(c);
    if (!rc.preset) rc.preset = "paper-sec6b";
    if (rc.experiments < 1) throw ConfigError("experiments must be >= 1");
    const auto nominal = system_of(rc);
    const auto shifted = system_of(rc, true);
    const auto fc = fit_of(rc, nominal.state_dim());
    const double R = rc.R.value_or(fc.perturbation.metric_radius());
    if (!(R > 0.0)) throw ConfigError("R must be positive (set --R or a positive --gamma)");
    io::Table t({"experiment", "s_star", "eps_lo", "eps_hi", "mu_tilde", "R", "ood_bound", "v_hat_ood", "pass"});
    int failed = 0;
    for (int e = 0; e < rc.experiments; ++e) {
      BenchmarkConfig nom = nominal, sh = shifted;
      nom.seed = sh.seed = derive_seed(rc.seed, static_cast<std::uint64_t>(e), 2);
      const auto rep = ood_experiment(nom, sh, fc, rc.beta, rc.mu_tilde, R, rc.N, rc.n_test, rc.tol_active);
      if (!rep.ok) {
        ++failed;
        log_ << "experiment " << e << " failed: " << rep.error << "\n";
        continue;
      }
      const auto& cert = rep.certificate;
      t.row().add(e).add(cert.s_star).add(cert.eps_lo).add(cert.eps_hi).add(rc.mu_tilde).add(R).add(cert.ood->bound)
          .add(rep.shifted.v_hat).add(rep.pass ? 1 : 0);
    }
    emit(t.str());
    return failed == rc.experiments ? kSolver : kOk;
  }

  std::ostream& out_;
  std::ostream& log_;
  Flags f_;
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& log = std::cerr) {
  return Driver(out, log).run(argc, argv);
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& log = std::cerr) {
  std::vector<const char*> argv{"scenreach"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, log);
}

}  // namespace scenreach::cli
