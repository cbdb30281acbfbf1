#pragma once

// On-disk formats: trajectory CSV, CSV tables, and the JSON results document
// (tube, slacks, certificate, provenance). Doubles are written in shortest
// round-trip form so every value reads back bit-exactly.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenreach/certify.hpp"
#include "scenreach/core.hpp"
#include "scenreach/error.hpp"
#include "scenreach/fit.hpp"
#include "scenreach/simulate.hpp"

namespace scenreach::io {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
    throw InputError("line " + std::to_string(line) + ": not a finite number: '" + std::string(s) + "'");
  return v;
}

inline long long parse_int(std::string_view s, std::size_t line) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw InputError("line " + std::to_string(line) + ": not an integer: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("error writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Trajectory CSV: sample_id,k,x1,...,xn with rows sorted by (sample_id, k).

inline std::string trajectories_to_csv(const TrajectoryBatch& batch) {
  std::string s = "sample_id,k";
  for (int d = 1; d <= batch.state_dim(); ++d) s += ",x" + std::to_string(d);
  s += '\n';
  for (int i = 0; i < batch.size(); ++i) {
    const auto& st = batch[i].states();
    for (int k = 0; k <= batch.horizon(); ++k) {
      s += std::to_string(i);
      s += ',';
      s += std::to_string(k);
      for (int d = 0; d < batch.state_dim(); ++d) {
        s += ',';
        s += format_double(st(d, k));
      }
      s += '\n';
    }
  }
  return s;
}

inline TrajectoryBatch trajectories_from_csv(const std::string& text, const std::string& source = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw InputError("line 1: missing header");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto head = split(line);
  if (head.size() < 3 || head[0] != "sample_id" || head[1] != "k")
    throw InputError("line 1: header must be sample_id,k,x1,...,xn");
  const int n = static_cast<int>(head.size()) - 2;
  for (int d = 0; d < n; ++d)
    if (head[static_cast<std::size_t>(d) + 2] != "x" + std::to_string(d + 1))
      throw InputError("line 1: expected column x" + std::to_string(d + 1));

  std::vector<Trajectory> trs;
  std::vector<Vector> cols;
  long long current = -1;
  auto flush = [&]() {
    if (cols.empty()) return;
    Matrix s(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) s.col(static_cast<Eigen::Index>(k)) = cols[k];
    trs.emplace_back(std::move(s));
    cols.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (static_cast<int>(f.size()) != n + 2)
      throw InputError("line " + std::to_string(lineno) + ": expected " + std::to_string(n + 2) + " fields");
    const long long id = parse_int(f[0], lineno);
    const long long k = parse_int(f[1], lineno);
    if (id != current) {
      if (id < current) throw InputError("line " + std::to_string(lineno) + ": rows not sorted by sample_id");
      flush();
      current = id;
    }
    if (k != static_cast<long long>(cols.size()))
      throw InputError("line " + std::to_string(lineno) + ": expected k = " + std::to_string(cols.size()));
    Vector x(n);
    for (int d = 0; d < n; ++d) x[d] = parse_double(f[static_cast<std::size_t>(d) + 2], lineno);
    cols.push_back(std::move(x));
  }
  flush();
  if (trs.empty()) throw InputError("no trajectory rows");
  const int T = trs.front().horizon();
  for (std::size_t i = 0; i < trs.size(); ++i)
    if (trs[i].horizon() != T) throw InputError("trajectory " + std::to_string(i) + " has a different horizon");
  return TrajectoryBatch(std::move(trs), source);
}

// ---------------------------------------------------------------------------
// Tables

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  Table& row() {
    rows_.emplace_back();
    return *this;
  }
  Table& add(double v) { return add_raw(format_double(v)); }
  Table& add(int v) { return add_raw(std::to_string(v)); }
  Table& add_raw(std::string s) {
    rows_.back().push_back(std::move(s));
    return *this;
  }

  std::string str() const {
    std::string s;
    for (std::size_t j = 0; j < header_.size(); ++j) s += (j ? "," : "") + header_[j];
    s += '\n';
    for (const auto& r : rows_) {
      for (std::size_t j = 0; j < r.size(); ++j) s += (j ? "," : "") + r[j];
      s += '\n';
    }
    return s;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// JSON conversions

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const Matrix& M) {
  json a = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

inline Vector vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw InputError(std::string(what) + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InputError(std::string(what) + ": expected numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw InputError(std::string(what) + ": expected a matrix");
  const auto rows = j.size(), cols = j[0].size();
  Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw InputError(std::string(what) + ": ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw InputError(std::string(what) + ": expected numbers");
      M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return M;
}

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<Geometry> kGeometryNames[] = {{Geometry::ball, "ball"},
                                                        {Geometry::ellipsoid_fixed, "ellipsoid-fixed"},
                                                        {Geometry::ellipsoid_logdet, "ellipsoid-logdet"},
                                                        {Geometry::zonotope, "zonotope"}};
inline constexpr EnumName<NormKind> kNormNames[] = {{NormKind::l1, "1"}, {NormKind::l2, "2"}, {NormKind::linf, "inf"}};
inline constexpr EnumName<SizeProxy> kProxyNames[] = {{SizeProxy::radius, "radius"},
                                                      {SizeProxy::scale, "scale"},
                                                      {SizeProxy::halfwidth_sum, "halfwidth-sum"},
                                                      {SizeProxy::ball_volume, "ball-volume"},
                                                      {SizeProxy::neg_logdet, "neg-logdet"}};

template <typename E, std::size_t K>
const char* name_of(const EnumName<E> (&table)[K], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <typename E, std::size_t K>
E parse_enum(const EnumName<E> (&table)[K], const std::string& s, const char* what) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  std::string allowed;
  for (const auto& e : table) allowed += std::string(allowed.empty() ? "" : "|") + e.name;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected " + allowed + ")");
}

inline json to_json(const TubeParams& tube) {
  json j;
  j["geometry"] = name_of(kGeometryNames, tube.geometry());
  json steps = json::array();
  switch (tube.geometry()) {
    case Geometry::ball:
      j["p"] = name_of(kNormNames, tube.as_ball().p);
      for (const auto& s : tube.as_ball().steps) steps.push_back({{"center", to_json(s.center)}, {"radius", s.radius}});
      break;
    case Geometry::ellipsoid_fixed:
      for (const auto& s : tube.as_ellipsoid().steps)
        steps.push_back({{"shape", to_json(s.shape)}, {"center", to_json(s.center)}, {"scale", s.scale}});
      break;
    case Geometry::ellipsoid_logdet:
      for (const auto& s : tube.as_logdet().steps) steps.push_back({{"C", to_json(s.C)}, {"offset", to_json(s.offset)}});
      break;
    case Geometry::zonotope:
      for (const auto& s : tube.as_zonotope().steps)
        steps.push_back({{"generators", to_json(s.generators)},
                         {"center", to_json(s.center)},
                         {"halfwidths", to_json(s.halfwidths)}});
      break;
  }
  j["steps"] = std::move(steps);
  return j;
}

inline const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InputError(std::string("missing field '") + key + "'");
  return j.at(key);
}

inline TubeParams tube_from_json(const json& j) {
  const Geometry g = parse_enum(kGeometryNames, require(j, "geometry").get<std::string>(), "geometry");
  const json& steps = require(j, "steps");
  if (!steps.is_array() || steps.empty()) throw InputError("tube steps must be a nonempty array");
  switch (g) {
    case Geometry::ball: {
      std::vector<BallStep> s;
      for (const auto& e : steps) s.push_back({vector_from_json(require(e, "center"), "center"), require(e, "radius").get<double>()});
      return TubeParams::ball(parse_enum(kNormNames, require(j, "p").get<std::string>(), "norm"), std::move(s));
    }
    case Geometry::ellipsoid_fixed: {
      std::vector<EllipsoidStep> s;
      for (const auto& e : steps)
        s.push_back({matrix_from_json(require(e, "shape"), "shape"), vector_from_json(require(e, "center"), "center"),
                     require(e, "scale").get<double>()});
      return TubeParams::ellipsoid_fixed(std::move(s));
    }
    case Geometry::ellipsoid_logdet: {
      std::vector<LogdetStep> s;
      for (const auto& e : steps)
        s.push_back({matrix_from_json(require(e, "C"), "C"), vector_from_json(require(e, "offset"), "offset")});
      return TubeParams::ellipsoid_logdet(std::move(s));
    }
    case Geometry::zonotope: {
      std::vector<ZonotopeStep> s;
      for (const auto& e : steps)
        s.push_back({matrix_from_json(require(e, "generators"), "generators"),
                     vector_from_json(require(e, "center"), "center"),
                     vector_from_json(require(e, "halfwidths"), "halfwidths")});
      return TubeParams::zonotope(std::move(s));
    }
  }
  throw InputError("unknown geometry");
}

inline json to_json(const PerturbationModel& m) {
  json j;
  switch (m.kind()) {
    case PerturbationKind::none:
      j["kind"] = "none";
      break;
    case PerturbationKind::box:
      j["kind"] = "box";
      j["radii"] = to_json(m.radii());
      break;
    case PerturbationKind::vertex_list: {
      j["kind"] = "vertex-list";
      json offs = json::array();
      for (const auto& o : m.offsets()) offs.push_back(to_json(o));
      j["offsets"] = std::move(offs);
      j["R"] = m.metric_radius();
      break;
    }
  }
  return j;
}

inline PerturbationModel perturbation_from_json(const json& j) {
  const std::string kind = require(j, "kind").get<std::string>();
  if (kind == "none") return PerturbationModel::none();
  if (kind == "box") return PerturbationModel::box(vector_from_json(require(j, "radii"), "radii"));
  if (kind == "vertex-list") {
    std::vector<Vector> offs;
    for (const auto& o : require(j, "offsets")) offs.push_back(vector_from_json(o, "offset"));
    return PerturbationModel::vertex_list(std::move(offs), require(j, "R").get<double>());
  }
  throw ConfigError("unknown perturbation kind '" + kind + "'");
}

inline json to_json(const FitConfig& c) {
  json j;
  j["geometry"] = name_of(kGeometryNames, c.geometry);
  j["p"] = name_of(kNormNames, c.p);
  j["rho"] = c.rho;
  j["perturbation"] = to_json(c.perturbation);
  j["tie_break"] = c.tie_break;
  j["tol"] = c.tol;
  j["logdet_shape"] = c.logdet_shape == LogdetShape::diagonal ? "diagonal" : "full";
  j["proxy"] = c.proxy ? json(name_of(kProxyNames, *c.proxy)) : json(nullptr);
  json shapes = json::array();
  for (const auto& M : c.shapes) shapes.push_back(to_json(M));
  j["shapes"] = std::move(shapes);
  return j;
}

inline FitConfig fit_config_from_json(const json& j) {
  FitConfig c;
  if (!j.is_object()) throw ConfigError("fit configuration must be an object");
  if (j.contains("geometry")) c.geometry = parse_enum(kGeometryNames, j["geometry"].get<std::string>(), "geometry");
  if (j.contains("p")) c.p = parse_enum(kNormNames, j["p"].get<std::string>(), "norm");
  if (j.contains("rho")) c.rho = j["rho"].get<double>();
  if (j.contains("perturbation")) c.perturbation = perturbation_from_json(j["perturbation"]);
  if (j.contains("tie_break")) c.tie_break = j["tie_break"].get<bool>();
  if (j.contains("tol")) c.tol = j["tol"].get<double>();
  if (j.contains("logdet_shape")) {
    const auto s = j["logdet_shape"].get<std::string>();
    if (s != "diagonal" && s != "full") throw ConfigError("logdet_shape must be diagonal or full");
    c.logdet_shape = s == "diagonal" ? LogdetShape::diagonal : LogdetShape::full;
  }
  if (j.contains("proxy") && !j["proxy"].is_null())
    c.proxy = parse_enum(kProxyNames, j["proxy"].get<std::string>(), "size proxy");
  if (j.contains("shapes"))
    for (const auto& M : j["shapes"]) c.shapes.push_back(matrix_from_json(M, "shape"));
  return c;
}

inline json to_json(const Distribution& d) {
  if (const auto* b = std::get_if<UniformBox>(&d)) return {{"type", "uniform"}, {"lo", to_json(b->lo)}, {"hi", to_json(b->hi)}};
  const auto& g = std::get<DiagGaussian>(d);
  return {{"type", "gaussian"}, {"mean", to_json(g.mean)}, {"variance", to_json(g.variance)}};
}

inline Distribution distribution_from_json(const json& j) {
  const std::string type = require(j, "type").get<std::string>();
  if (type == "uniform") return UniformBox{vector_from_json(require(j, "lo"), "lo"), vector_from_json(require(j, "hi"), "hi")};
  if (type == "gaussian")
    return DiagGaussian{vector_from_json(require(j, "mean"), "mean"), vector_from_json(require(j, "variance"), "variance")};
  throw ConfigError("unknown distribution type '" + type + "'");
}

inline json to_json(const BenchmarkConfig& c) {
  return {{"A", to_json(c.A)},        {"B", to_json(c.B)},
          {"C", to_json(c.C)},        {"a", c.a},
          {"T", c.T},                 {"initial", to_json(c.initial)},
          {"disturbance", to_json(c.disturbance)}, {"seed", c.seed}};
}

/// Fields present in j override those of base.
inline BenchmarkConfig benchmark_from_json(const json& j, BenchmarkConfig base) {
  if (!j.is_object()) throw ConfigError("system configuration must be an object");
  if (j.contains("A")) base.A = matrix_from_json(j["A"], "A");
  if (j.contains("B")) base.B = matrix_from_json(j["B"], "B");
  if (j.contains("C")) base.C = matrix_from_json(j["C"], "C");
  if (j.contains("a")) base.a = j["a"].get<double>();
  if (j.contains("T")) base.T = j["T"].get<int>();
  if (j.contains("initial")) base.initial = distribution_from_json(j["initial"]);
  if (j.contains("disturbance")) base.disturbance = distribution_from_json(j["disturbance"]);
  if (j.contains("seed")) base.seed = j["seed"].get<std::uint64_t>();
  return base;
}

inline json to_json(const SolverDiagnostics& d) {
  return {{"status", d.status},
          {"message", d.message},
          {"newton_steps", d.newton_steps},
          {"gap", d.gap},
          {"max_violation", d.max_violation},
          {"tie_break_applied", d.tie_break_applied},
          {"constraint_rows", d.constraint_rows},
          {"num_vars", d.num_vars},
          {"shape_note", d.shape_note}};
}

inline json to_json(const ComplexityReport& r) {
  json flagged = json::array();
  for (const auto& f : r.flagged_indices)
    flagged.push_back({{"index", f.index}, {"reason", to_string(f.reason)}, {"margin", f.margin}});
  return {{"s_star", r.s_star},
          {"flagged_indices", std::move(flagged)},
          {"tol_active", r.tol_active},
          {"outer_conditions_merged", r.outer_conditions_merged}};
}

inline json to_json(const Certificate& c) {
  json j = {{"N", c.N},
            {"beta", c.beta},
            {"s_star", c.s_star},
            {"eps_lo", c.eps_lo},
            {"eps_hi", c.eps_hi},
            {"vacuous", c.vacuous},
            {"no_root", c.no_root},
            {"interpretation", c.interpretation}};
  if (c.ood)
    j["ood"] = {{"mu_tilde", c.ood->mu_tilde},
                {"R", c.ood->R},
                {"raw", c.ood->raw},
                {"bound", c.ood->bound},
                {"clamped", c.ood->clamped}};
  return j;
}

inline Certificate certificate_from_json(const json& j) {
  Certificate c;
  c.N = require(j, "N").get<int>();
  c.beta = require(j, "beta").get<double>();
  c.s_star = require(j, "s_star").get<int>();
  c.eps_lo = require(j, "eps_lo").get<double>();
  c.eps_hi = require(j, "eps_hi").get<double>();
  c.vacuous = require(j, "vacuous").get<bool>();
  c.no_root = require(j, "no_root").get<bool>();
  c.interpretation = require(j, "interpretation").get<std::string>();
  if (j.contains("ood")) {
    const auto& o = j["ood"];
    c.ood = OodBound{require(o, "mu_tilde").get<double>(), require(o, "R").get<double>(), require(o, "raw").get<double>(),
                     require(o, "bound").get<double>(), require(o, "clamped").get<bool>()};
  }
  return c;
}

inline json to_json(const ValidationReport& r) {
  json j = {{"n_test", r.n_test}, {"violations", r.violations}, {"v_hat", r.v_hat}, {"per_timestep", r.per_timestep}};
  if (r.comparison) j["comparison"] = {{"eps_hi", r.comparison->eps_hi}, {"pass", r.comparison->pass}};
  return j;
}

// ---------------------------------------------------------------------------
// Provenance

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical (sorted-key, compact) dump of the configuration.
inline std::string config_hash(const json& config) {
  char buf[17];
  const auto r = std::to_chars(buf, buf + 16, fnv1a(config.dump()), 16);
  std::string hex(buf, r.ptr);
  return std::string(16 - hex.size(), '0') + hex;
}

inline json provenance(const std::string& command, const json& config, std::uint64_t seed) {
  return {{"command", command}, {"config_hash", config_hash(config)}, {"seed", seed}, {"tool_version", kToolVersion}};
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace scenreach::io
