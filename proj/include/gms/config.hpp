#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gms/error.hpp"
#include "gms/family.hpp"
#include "gms/inference.hpp"
#include "gms/io.hpp"
#include "gms/metric.hpp"
#include "gms/models.hpp"
#include "gms/sampling.hpp"
#include "gms/ustat.hpp"

namespace gms {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct DistSpec {
  std::string law = "uniform";  // uniform | normal | scaled_uniform
  double a = 0.0, b = 1.0, scale = 1.0;

  Distribution build() const {
    if (law == "uniform") return Distribution::uniform(a, b);
    if (law == "normal") return Distribution::standard_normal();
    if (law == "scaled_uniform") return Distribution::scaled_uniform(scale, a, b);
    throw ConfigError("unknown law '" + law + "'");
  }
};

struct ModelSpec {
  std::string name = "lognormal_toy";  // lognormal_toy | plume | plume_field | plume_map | external
  double height = 1.0;                 // H for plume and plume_field
  GridSpec grid = plume_default_grid();
  // external models
  std::string command;
  std::vector<DistSpec> inputs;
  std::vector<std::string> input_names;
  std::string output = "scalar";  // scalar | vector | field
  std::size_t output_dim = 1;

  std::size_t input_count() const {
    if (name == "lognormal_toy") return 2;
    if (name == "plume" || name == "plume_field") return 3;
    if (name == "plume_map") return 4;
    return inputs.size();
  }

  // scalar | vector | field
  std::string output_kind() const {
    if (name == "lognormal_toy") return "scalar";
    if (name == "external") return output;
    return "field";
  }
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  ModelSpec model;
  std::vector<FamilyKind> families;
  std::vector<std::vector<std::size_t>> subsets;
  std::size_t n = 0;       // paired sample size per design; 0 derives it from the budget
  std::size_t budget = 0;  // total model evaluations of a run
  bool shared_design = false;
  std::vector<std::string> estimators;
  CiMethod ci = CiMethod::Automatic;
  double level = 0.95;
  std::size_t projection_tuples = 200;
  std::size_t bootstrap_replicates = 500;
  UStatMode mode = UStatMode::Automatic;
  std::size_t tuple_budget = 0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string output_dir = "gms_out";
  std::vector<std::size_t> budgets;  // convergence study
  std::size_t replicates = 1;
  std::string map_estimator = "gms";

  /// N for a given total budget: n/(1+k) for a shared design over k subsets,
  /// n/(2k) when each subset has its own design.
  std::size_t sample_size_for(std::size_t total) const {
    const std::size_t k = std::max<std::size_t>(1, subsets.size());
    return shared_design ? total / (1 + k) : total / (2 * k);
  }
  std::size_t sample_size() const { return n ? n : sample_size_for(budget); }
  std::size_t calls_for(std::size_t N) const {
    const std::size_t k = subsets.size();
    return shared_design ? N * (1 + k) : 2 * N * k;
  }
  std::size_t max_order() const {
    std::size_t m = 0;
    for (auto f : families) m = std::max(m, family_order(f));
    return m;
  }
  std::vector<SubsetU> subset_list() const {
    std::vector<SubsetU> out;
    for (const auto& s : subsets) out.emplace_back(s, model.input_count());
    return out;
  }
};

namespace detail {

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col > 1 ? col - 1 : 1);
}

// Collects "path: message" diagnostics while reading a JSON object.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

  void error(const std::string& path, const std::string& msg) { errors_.push_back(path + ": " + msg); }

  void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) return;
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!allowed.count(it.key())) error(path + "/" + it.key(), "unknown key");
  }

  template <class T>
  void get(const json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    const std::string p = path + "/" + key;
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (v.is_number_float()) {
          const double d = v.get<double>();
          if (d < 0 || d != std::floor(d) || d > 1.8e19) throw std::invalid_argument("x");
          out = static_cast<T>(d);
          return;
        }
        if (!v.is_number_unsigned()) throw std::invalid_argument("x");
      }
      if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw std::invalid_argument("x");
      }
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw std::invalid_argument("x");
      }
      if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("x");
      }
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("x");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      error(p, std::string("expected ") + type_name<T>() + ", got " + v.dump());
    }
  }

 private:
  template <class T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) return "a nonnegative integer";
    if constexpr (std::is_same_v<T, int>) return "an integer";
    if constexpr (std::is_same_v<T, double>) return "a number";
    if constexpr (std::is_same_v<T, std::string>) return "a string";
    if constexpr (std::is_same_v<T, bool>) return "true or false";
    return "a value";
  }
  std::vector<std::string>& errors_;
};

inline void read_grid(Reader& r, const json& g, const std::string& path, GridSpec& grid) {
  if (!g.is_object()) {
    r.error(path, "expected an object");
    return;
  }
  r.only_keys(g, path, {"x", "y", "nx", "ny"});
  for (const char* axis : {"x", "y"}) {
    if (!g.contains(axis)) continue;
    const json& v = g.at(axis);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      r.error(path + "/" + axis, "expected [min, max]");
      continue;
    }
    (axis[0] == 'x' ? grid.x0 : grid.y0) = v[0].get<double>();
    (axis[0] == 'x' ? grid.x1 : grid.y1) = v[1].get<double>();
  }
  r.get(g, path, "nx", grid.nx);
  r.get(g, path, "ny", grid.ny);
  try {
    grid.validate();
  } catch (const std::exception& e) {
    r.error(path, e.what());
  }
}

inline json grid_to_json(const GridSpec& g) {
  return {{"x", {g.x0, g.x1}}, {"y", {g.y0, g.y1}}, {"nx", g.nx}, {"ny", g.ny}};
}

}  // namespace detail

/// Parses and validates a run configuration. A run report (an object with an
/// embedded "config") is accepted too. Syntax errors report line:column;
/// semantic errors report the JSON path of the offending field.
inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ":" + detail::line_col(text, e.byte) + ": JSON syntax error: " + e.what());
  }
  if (root.is_object() && root.contains("config") && root.contains("rows")) root = root["config"];
  if (!root.is_object()) throw ConfigError(source + ": top level must be a JSON object");

  std::vector<std::string> errs;
  detail::Reader r(errs);
  RunConfig c;
  r.only_keys(root, "", {"schema_version", "model", "families", "subsets", "N", "budget", "design", "estimators", "ci",
                         "ustat", "seed", "workers", "output_dir", "convergence", "map"});

  if (!root.contains("schema_version")) {
    r.error("/schema_version", "missing (current version is " + std::to_string(kSchemaVersion) + ")");
  } else {
    r.get(root, "", "schema_version", c.schema_version);
    if (c.schema_version != kSchemaVersion)
      r.error("/schema_version", "unsupported version " + std::to_string(c.schema_version));
  }

  // model
  if (!root.contains("model") || !root["model"].is_object()) {
    r.error("/model", "missing model object");
  } else {
    const json& m = root["model"];
    r.only_keys(m, "/model", {"name", "H", "grid", "command", "inputs", "input_names", "output"});
    r.get(m, "/model", "name", c.model.name);
    static const std::set<std::string> names = {"lognormal_toy", "plume", "plume_field", "plume_map", "external"};
    if (!names.count(c.model.name))
      r.error("/model/name", "unknown model '" + c.model.name +
                                 "' (expected lognormal_toy, plume, plume_field, plume_map or external)");
    r.get(m, "/model", "H", c.model.height);
    if (m.contains("grid")) detail::read_grid(r, m["grid"], "/model/grid", c.model.grid);
    if (c.model.name.rfind("plume", 0) == 0) {
      try {
        check_plume_grid(c.model.grid);
      } catch (const std::exception& e) {
        r.error("/model/grid", e.what());
      }
      if (!(c.model.height >= 0.0)) r.error("/model/H", "must be >= 0");
    }
    if (c.model.name == "external") {
      r.get(m, "/model", "command", c.model.command);
      if (c.model.command.empty()) r.error("/model/command", "external models need a command");
      if (!m.contains("inputs") || !m["inputs"].is_array() || m["inputs"].empty()) {
        r.error("/model/inputs", "external models need a nonempty list of input laws");
      } else {
        for (std::size_t i = 0; i < m["inputs"].size(); ++i) {
          const json& d = m["inputs"][i];
          const std::string p = "/model/inputs/" + std::to_string(i);
          DistSpec ds;
          r.only_keys(d, p, {"law", "a", "b", "scale"});
          r.get(d, p, "law", ds.law);
          r.get(d, p, "a", ds.a);
          r.get(d, p, "b", ds.b);
          r.get(d, p, "scale", ds.scale);
          try {
            ds.build();
          } catch (const std::exception& e) {
            r.error(p, e.what());
          }
          c.model.inputs.push_back(ds);
        }
      }
      if (m.contains("input_names")) {
        if (!m["input_names"].is_array()) {
          r.error("/model/input_names", "expected a list of strings");
        } else {
          for (const auto& v : m["input_names"]) c.model.input_names.push_back(v.is_string() ? v.get<std::string>() : "?");
        }
      }
      if (m.contains("output")) {
        const json& o = m["output"];
        r.only_keys(o, "/model/output", {"kind", "dim", "grid"});
        r.get(o, "/model/output", "kind", c.model.output);
        r.get(o, "/model/output", "dim", c.model.output_dim);
        if (o.contains("grid")) detail::read_grid(r, o["grid"], "/model/output/grid", c.model.grid);
        if (c.model.output != "scalar" && c.model.output != "vector" && c.model.output != "field")
          r.error("/model/output/kind", "expected scalar, vector or field");
        if (c.model.output == "vector" && c.model.output_dim < 1) r.error("/model/output/dim", "must be >= 1");
      }
    }
  }
  const std::size_t p = c.model.input_count();

  // families
  if (!root.contains("families") || !root["families"].is_array() || root["families"].empty()) {
    r.error("/families", "expected a nonempty list of family kinds");
  } else {
    for (std::size_t i = 0; i < root["families"].size(); ++i) {
      const json& f = root["families"][i];
      try {
        if (!f.is_string()) throw ConfigError("expected a string");
        c.families.push_back(parse_family_kind(f.get<std::string>()));
      } catch (const std::exception& e) {
        r.error("/families/" + std::to_string(i), e.what());
      }
    }
  }

  // subsets
  if (!root.contains("subsets") || !root["subsets"].is_array() || root["subsets"].empty()) {
    r.error("/subsets", "expected a nonempty list of subsets, e.g. [[1], [2]]");
  } else {
    for (std::size_t i = 0; i < root["subsets"].size(); ++i) {
      const json& s = root["subsets"][i];
      const std::string path = "/subsets/" + std::to_string(i);
      std::vector<std::size_t> idx;
      bool ok = s.is_array();
      if (ok)
        for (const auto& v : s) {
          if (!v.is_number_unsigned()) {
            ok = false;
            break;
          }
          idx.push_back(v.get<std::size_t>());
        }
      if (!ok) {
        r.error(path, "expected a list of 1-based input indices");
        continue;
      }
      try {
        if (p > 0) (void)SubsetU(idx, p);
        c.subsets.push_back(idx);
      } catch (const std::exception& e) {
        r.error(path, e.what());
      }
    }
  }

  // sample size
  r.get(root, "", "N", c.n);
  r.get(root, "", "budget", c.budget);
  std::string design = "independent";
  r.get(root, "", "design", design);
  if (design != "independent" && design != "shared") r.error("/design", "expected independent or shared");
  c.shared_design = design == "shared";

  // estimators
  if (!root.contains("estimators") || !root["estimators"].is_array() || root["estimators"].empty()) {
    r.error("/estimators", "expected a nonempty list (gms, pf, pf_efficient)");
  } else {
    for (std::size_t i = 0; i < root["estimators"].size(); ++i) {
      const json& e = root["estimators"][i];
      const std::string name = e.is_string() ? e.get<std::string>() : "";
      if (name != "gms" && name != "pf" && name != "pf_efficient")
        r.error("/estimators/" + std::to_string(i), "unknown estimator " + e.dump() + " (expected gms, pf or pf_efficient)");
      else
        c.estimators.push_back(name);
    }
  }

  if (root.contains("ci")) {
    const json& ci = root["ci"];
    r.only_keys(ci, "/ci", {"method", "level", "projection_tuples", "bootstrap_replicates"});
    std::string method = "auto";
    r.get(ci, "/ci", "method", method);
    try {
      c.ci = parse_ci_method(method);
    } catch (const std::exception& e) {
      r.error("/ci/method", e.what());
    }
    r.get(ci, "/ci", "level", c.level);
    r.get(ci, "/ci", "projection_tuples", c.projection_tuples);
    r.get(ci, "/ci", "bootstrap_replicates", c.bootstrap_replicates);
    if (!(c.level > 0.0 && c.level < 1.0)) r.error("/ci/level", "must lie in (0,1)");
    if (c.projection_tuples < 1) r.error("/ci/projection_tuples", "must be >= 1");
    if (c.bootstrap_replicates < 50) r.error("/ci/bootstrap_replicates", "must be >= 50");
  }
  if (root.contains("ustat")) {
    const json& u = root["ustat"];
    r.only_keys(u, "/ustat", {"mode", "tuple_budget"});
    std::string mode = "auto";
    r.get(u, "/ustat", "mode", mode);
    try {
      c.mode = parse_ustat_mode(mode);
    } catch (const std::exception& e) {
      r.error("/ustat/mode", e.what());
    }
    r.get(u, "/ustat", "tuple_budget", c.tuple_budget);
  }
  r.get(root, "", "seed", c.seed);
  r.get(root, "", "workers", c.workers);
  if (c.workers < 1) r.error("/workers", "must be >= 1");
  r.get(root, "", "output_dir", c.output_dir);

  if (root.contains("convergence")) {
    const json& cv = root["convergence"];
    r.only_keys(cv, "/convergence", {"budgets", "min", "max", "points", "replicates"});
    if (cv.contains("budgets")) {
      if (!cv["budgets"].is_array()) {
        r.error("/convergence/budgets", "expected a list of budgets");
      } else {
        for (const auto& b : cv["budgets"]) {
          if (b.is_number_unsigned()) c.budgets.push_back(b.get<std::size_t>());
          else if (b.is_number_float() && b.get<double>() >= 1.0) c.budgets.push_back(static_cast<std::size_t>(b.get<double>()));
          else r.error("/convergence/budgets", "budgets must be positive integers");
        }
      }
    } else if (cv.contains("min") || cv.contains("max")) {
      double lo = 0, hi = 0;
      std::size_t points = 5;
      r.get(cv, "/convergence", "min", lo);
      r.get(cv, "/convergence", "max", hi);
      r.get(cv, "/convergence", "points", points);
      if (!(lo >= 1.0 && hi >= lo && points >= 1)) {
        r.error("/convergence", "need 1 <= min <= max and points >= 1");
      } else {
        // log-spaced
        for (std::size_t k = 0; k < points; ++k) {
          const double t = points == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(points - 1);
          c.budgets.push_back(static_cast<std::size_t>(std::llround(lo * std::pow(hi / lo, t))));
        }
      }
    }
    r.get(cv, "/convergence", "replicates", c.replicates);
    if (c.replicates < 1) r.error("/convergence/replicates", "must be >= 1");
  }
  if (root.contains("map")) {
    const json& mp = root["map"];
    r.only_keys(mp, "/map", {"estimator"});
    r.get(mp, "/map", "estimator", c.map_estimator);
    try {
      parse_map_estimator(c.map_estimator);
    } catch (const std::exception& e) {
      r.error("/map/estimator", e.what());
    }
  }

  // cross-field checks
  if (!root.contains("N") && !root.contains("budget") && !root.contains("convergence"))
    r.error("/N", "give N (pairs per design) or budget (total model calls)");
  if (root.contains("N") && root.contains("budget")) r.error("/budget", "give either N or budget, not both");
  const std::string kind = c.model.output_kind();
  for (std::size_t i = 0; i < c.families.size(); ++i) {
    const auto f = c.families[i];
    const std::string path = "/families/" + std::to_string(i);
    if (f == FamilyKind::SobolValue && kind != "scalar") r.error(path, "sobol family requires scalar outputs");
    if (f == FamilyKind::HalfSpaceCvM && kind == "field") r.error(path, "cvm family requires scalar or vector outputs");
    if (f == FamilyKind::MidpointBall && c.model.name == "plume")
      r.error(path, "midpoint_ball is not available on the parametric plume space (use plume_field)");
  }
  const bool has_pf = std::any_of(c.estimators.begin(), c.estimators.end(), [](const auto& e) { return e != "gms"; });
  if (has_pf && std::find(c.families.begin(), c.families.end(), FamilyKind::SobolValue) == c.families.end())
    r.error("/estimators", "pf and pf_efficient apply to the sobol family only; add \"sobol\" to families");
  if (errs.empty() && (c.n || c.budget)) {
    const std::size_t N = c.sample_size();
    const std::size_t need = c.max_order() + 2;
    if (N < need)
      r.error(c.n ? "/N" : "/budget", "sample size N=" + std::to_string(N) + " is below m+2=" + std::to_string(need));
    if (c.mode == UStatMode::Incomplete && c.tuple_budget != 0 && c.tuple_budget < N)
      r.error("/ustat/tuple_budget", "incomplete mode needs tuple_budget >= N");
  }

  if (!errs.empty()) {
    std::string msg = source + ": invalid configuration:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

/// Canonical JSON form. Worker count and output directory are execution
/// settings and stay out of it, so the hash identifies the results.
inline json to_json(const RunConfig& c) {
  json m = {{"name", c.model.name}};
  if (c.model.name.rfind("plume", 0) == 0) {
    m["grid"] = detail::grid_to_json(c.model.grid);
    if (c.model.name != "plume_map") m["H"] = c.model.height;
  }
  if (c.model.name == "external") {
    m["command"] = c.model.command;
    json in = json::array();
    for (const auto& d : c.model.inputs) {
      json j = {{"law", d.law}};
      if (d.law != "normal") {
        j["a"] = d.a;
        j["b"] = d.b;
      }
      if (d.law == "scaled_uniform") j["scale"] = d.scale;
      in.push_back(j);
    }
    m["inputs"] = in;
    if (!c.model.input_names.empty()) m["input_names"] = c.model.input_names;
    json out = {{"kind", c.model.output}};
    if (c.model.output == "vector") out["dim"] = c.model.output_dim;
    if (c.model.output == "field") out["grid"] = detail::grid_to_json(c.model.grid);
    m["output"] = out;
  }
  json fam = json::array();
  for (auto f : c.families) fam.push_back(std::string(to_string(f)));
  json j = {{"schema_version", c.schema_version},
            {"model", m},
            {"families", fam},
            {"subsets", c.subsets},
            {"design", c.shared_design ? "shared" : "independent"},
            {"estimators", c.estimators},
            {"ci",
             {{"method", std::string(to_string(c.ci))},
              {"level", c.level},
              {"projection_tuples", c.projection_tuples},
              {"bootstrap_replicates", c.bootstrap_replicates}}},
            {"ustat", {{"mode", std::string(to_string(c.mode))}, {"tuple_budget", c.tuple_budget}}},
            {"seed", c.seed},
            {"map", {{"estimator", c.map_estimator}}}};
  if (c.n) j["N"] = c.n;
  if (c.budget) j["budget"] = c.budget;
  if (!c.budgets.empty()) j["convergence"] = {{"budgets", c.budgets}, {"replicates", c.replicates}};
  return j;
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

}  // namespace gms
