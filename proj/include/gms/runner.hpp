#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "gms/baselines.hpp"
#include "gms/config.hpp"
#include "gms/external.hpp"
#include "gms/inference.hpp"
#include "gms/io.hpp"
#include "gms/models.hpp"
#include "gms/sampling.hpp"
#include "gms/ustat.hpp"

namespace gms {

inline constexpr const char* kToolVersion = "0.1.0";

struct ResultRow {
  std::string subset;
  std::string family;
  std::string estimator;
  std::size_t n = 0;
  std::optional<double> value, sigma, ci_lo, ci_hi;
  std::size_t calls = 0;  // evaluations spent on the design this row uses
  std::uint64_t seed = 0;
  std::array<double, 4> components{};
  std::string method;
  std::string ci_method;
  std::vector<std::string> warnings;
  std::string error;
  bool out_of_range = false;
};

struct RunReport {
  RunConfig config;
  std::vector<ResultRow> rows;
  std::size_t total_calls = 0;    // sum over designs
  std::size_t counted_calls = 0;  // instrumented evaluator
  double seconds = 0.0;
  std::size_t workers = 1;
};

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

/// Independent designs get one seed per subset, derived from its label so it
/// does not depend on the order of subsets in the config.
inline std::uint64_t design_seed(std::uint64_t master, const SubsetU& u, bool shared) {
  return shared ? master : derive_seed(master, {fnv1a64(u.label())});
}

inline std::uint64_t estimation_seed(std::uint64_t design, FamilyKind f) {
  return derive_seed(design, {0x7E57, static_cast<std::uint64_t>(f)});
}

// ---------------------------------------------------------------------------
// Model dispatch
// ---------------------------------------------------------------------------

/// Calls fn(model, space) with the input model and output space of the config.
template <class Fn>
void with_model(const ModelSpec& spec, Fn&& fn) {
  if (spec.name == "lognormal_toy") {
    fn(lognormal_model(), ScalarSpace{});
  } else if (spec.name == "plume") {
    const PlumeFieldSpace space(spec.height, spec.grid);
    fn(plume_model(space), space);
  } else if (spec.name == "plume_field") {
    fn(plume_field_model(spec.height, spec.grid), GridFieldSpace{spec.grid});
  } else if (spec.name == "plume_map") {
    fn(plume_map_model(spec.grid), GridFieldSpace{spec.grid});
  } else if (spec.name == "external") {
    std::vector<Distribution> laws;
    for (const auto& d : spec.inputs) laws.push_back(d.build());
    if (spec.output == "scalar") {
      fn(external_scalar_model(spec.command, laws, spec.input_names), ScalarSpace{});
    } else if (spec.output == "vector") {
      fn(external_vector_model(spec.command, laws, spec.output_dim, spec.input_names), EuclideanSpace{spec.output_dim});
    } else {
      fn(external_vector_model(spec.command, laws, spec.grid.size(), spec.input_names), GridFieldSpace{spec.grid});
    }
  } else {
    throw ConfigError("unknown model '" + spec.name + "'");
  }
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

namespace detail {

template <MetricSpace Space>
ResultRow gms_row(const PairedSample<typename Space::point_type>& s, const TestFamily<Space>& family,
                  const RunConfig& cfg, std::uint64_t seed, const Executor& exec) {
  ResultRow row;
  row.estimator = "gms";
  try {
    UStatConfig ucfg;
    ucfg.mode = cfg.mode;
    ucfg.tuple_budget = cfg.tuple_budget;
    ucfg.seed = seed;
    InferenceConfig icfg;
    icfg.method = cfg.ci;
    icfg.level = cfg.level;
    icfg.tuples_per_row = cfg.projection_tuples;
    icfg.bootstrap_replicates = cfg.bootstrap_replicates;
    icfg.seed = derive_seed(seed, {0x1F});
    const auto res = estimate_with_inference(s, family, ucfg, icfg, exec);
    const auto& e = res.estimate;
    row.value = e.value;
    row.sigma = e.sigma;
    if (e.ci) {
      row.ci_lo = e.ci->lo;
      row.ci_hi = e.ci->hi;
    }
    row.components = e.components;
    row.method = e.method;
    row.ci_method = res.ci_method;
    row.warnings = res.warnings;
    row.out_of_range = e.out_of_range();
    if (row.out_of_range) row.warnings.push_back("estimate outside [0,1] (not clamped)");
  } catch (const std::exception& ex) {
    row.error = ex.what();
  }
  return row;
}

inline ResultRow baseline_row(const PairedSample<double>& s, const std::string& estimator, const RunConfig& cfg) {
  ResultRow row;
  row.estimator = estimator;
  try {
    const IndexEstimate e = estimator == "pf" ? sobol_pf_estimate(s, cfg.level) : sobol_pf_efficient_estimate(s, cfg.level);
    row.value = e.value;
    row.components = e.components;
    row.method = e.method;
    if (cfg.ci != CiMethod::None) {
      row.sigma = e.sigma;
      row.ci_lo = e.ci->lo;
      row.ci_hi = e.ci->hi;
      row.ci_method = "delta/rowwise";
    } else {
      row.ci_method = "none";
    }
    row.out_of_range = e.out_of_range();
  } catch (const std::exception& ex) {
    row.error = ex.what();
  }
  return row;
}

template <class Point>
std::vector<PairedSample<Point>> build_designs(const InputModel<Point>& model, const RunConfig& cfg,
                                               const std::vector<SubsetU>& subsets, std::size_t n,
                                               std::uint64_t seed, const Executor& exec) {
  if (cfg.shared_design) return pick_freeze_shared(model, std::span<const SubsetU>(subsets), n, seed, exec);
  std::vector<PairedSample<Point>> out;
  for (const auto& u : subsets) out.push_back(pick_freeze(model, u, n, design_seed(seed, u, false), exec));
  return out;
}

}  // namespace detail

/// Builds the designs for sample size n and master seed, then evaluates every
/// (subset, family, estimator) combination. Adds the model calls to `calls`.
template <class Point, MetricSpace Space>
std::vector<ResultRow> estimate_rows(const InputModel<Point>& model, const Space& space, const RunConfig& cfg,
                                     std::size_t n, std::uint64_t seed, const Executor& exec, std::size_t& calls) {
  const auto subsets = cfg.subset_list();
  const auto samples = detail::build_designs(model, cfg, subsets, n, seed, exec);
  calls += cfg.calls_for(n);
  std::vector<ResultRow> rows;
  for (std::size_t k = 0; k < subsets.size(); ++k) {
    const auto& s = samples[k];
    const std::uint64_t dseed = design_seed(seed, subsets[k], cfg.shared_design);
    for (const auto kind : cfg.families) {
      const TestFamily<Space> family(kind, space);
      for (const auto& est : cfg.estimators) {
        ResultRow row;
        if (est == "gms") {
          row = detail::gms_row(s, family, cfg, estimation_seed(dseed, kind), exec);
        } else if (kind == FamilyKind::SobolValue) {
          if constexpr (std::is_same_v<Point, double>) {
            row = detail::baseline_row(s, est, cfg);
          }
        } else {
          continue;  // baselines exist for the sobol family only
        }
        row.subset = subsets[k].label();
        row.family = std::string(to_string(kind));
        row.n = n;
        row.calls = s.design.evaluations;
        row.seed = seed;
        for (const auto& w : s.design.warnings) row.warnings.push_back(w);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

/// Single run: every requested (subset, family, estimator) at the configured N.
inline RunReport run(const RunConfig& cfg, std::size_t workers = 1) {
  const auto t0 = std::chrono::steady_clock::now();
  const Executor exec(workers);
  RunReport report;
  report.config = cfg;
  report.workers = workers;
  auto counter = std::make_shared<std::atomic<std::size_t>>(0);
  with_model(cfg.model, [&](const auto& model, const auto& space) {
    const auto counted = with_call_counter(model, counter);
    report.rows = estimate_rows(counted, space, cfg, cfg.sample_size(), cfg.seed, exec, report.total_calls);
  });
  report.counted_calls = counter->load();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

struct ConvergenceRow {
  std::size_t budget = 0;
  std::size_t replicate = 0;
  ResultRow row;
};

struct ConvergenceReport {
  RunConfig config;
  std::vector<ConvergenceRow> rows;
  std::size_t total_calls = 0;
  std::size_t counted_calls = 0;
  double seconds = 0.0;
};

/// Replicate r uses the master seed for r = 0, so a single budget reproduces
/// the plain run.
inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t r) {
  return r == 0 ? master : derive_seed(master, {0xC0417, r});
}

inline ConvergenceReport convergence_study(const RunConfig& cfg, std::size_t workers = 1) {
  if (cfg.budgets.empty()) throw ConfigError("/convergence: budget grid is empty");
  for (const auto b : cfg.budgets) {
    const std::size_t n = cfg.sample_size_for(b);
    if (n < cfg.max_order() + 2)
      throw ConfigError("/convergence/budgets: budget " + std::to_string(b) + " gives N=" + std::to_string(n) +
                        ", below m+2=" + std::to_string(cfg.max_order() + 2));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const Executor exec(workers);
  ConvergenceReport report;
  report.config = cfg;
  auto counter = std::make_shared<std::atomic<std::size_t>>(0);
  with_model(cfg.model, [&](const auto& model, const auto& space) {
    const auto counted = with_call_counter(model, counter);
    for (const auto b : cfg.budgets)
      for (std::size_t r = 0; r < cfg.replicates; ++r) {
        auto rows = estimate_rows(counted, space, cfg, cfg.sample_size_for(b), replicate_seed(cfg.seed, r), exec,
                                  report.total_calls);
        for (auto& row : rows) report.rows.push_back({b, r, std::move(row)});
      }
  });
  report.counted_calls = counter->load();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

struct MapReport {
  RunConfig config;
  std::vector<IndexMap> maps;
  std::size_t total_calls = 0;
  std::size_t counted_calls = 0;
  double seconds = 0.0;
};

/// Per-location Sobol-type maps for every configured subset; needs a model
/// with field (or vector) outputs whose length matches the model grid.
inline MapReport map_study(const RunConfig& cfg, std::size_t workers = 1) {
  const auto t0 = std::chrono::steady_clock::now();
  const Executor exec(workers);
  MapReport report;
  report.config = cfg;
  const std::string kind = cfg.model.output_kind();
  if (cfg.model.name == "plume" || kind == "scalar")
    throw ConfigError("/model: maps need field outputs (plume_map, plume_field or an external field model)");
  const GridSpec grid = cfg.model.grid;
  const auto est = parse_map_estimator(cfg.map_estimator);
  const std::size_t n = cfg.sample_size();
  auto counter = std::make_shared<std::atomic<std::size_t>>(0);
  with_model(cfg.model, [&](const auto& model, const auto&) {
    using Point = typename std::decay_t<decltype(model)>::point_type;
    if constexpr (std::is_same_v<Point, std::vector<double>>) {
      const auto counted = with_call_counter(model, counter);
      const auto subsets = cfg.subset_list();
      if (cfg.shared_design) {
        report.maps = ubiquitous_maps(counted, std::span<const SubsetU>(subsets), grid, n, est, cfg.seed, exec);
      } else {
        for (const auto& u : subsets)
          report.maps.push_back(ubiquitous_map(counted, u, grid, n, est, design_seed(cfg.seed, u, false), exec));
      }
      report.total_calls = cfg.calls_for(n);
    } else {
      throw ConfigError("/model: maps need field outputs");
    }
  });
  report.counted_calls = counter->load();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline const char* kEstimatesHeader = "subset,family,estimator,N,value,sigma,ci_lo,ci_hi,calls,seed";

inline void write_estimates_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kEstimatesHeader << '\n';
  for (const auto& r : rows)
    os << csv_field(r.subset) << ',' << r.family << ',' << r.estimator << ',' << r.n << ',' << format_double(r.value)
       << ',' << format_double(r.sigma) << ',' << format_double(r.ci_lo) << ',' << format_double(r.ci_hi) << ','
       << r.calls << ',' << r.seed << '\n';
}

inline json opt_json(const std::optional<double>& v) {
  if (!v || std::isnan(*v)) return nullptr;
  return *v;
}

inline json row_to_json(const ResultRow& r, bool full) {
  json j = {{"subset", r.subset}, {"family", r.family}, {"estimator", r.estimator}, {"N", r.n},
            {"value", opt_json(r.value)}, {"sigma", opt_json(r.sigma)}, {"ci_lo", opt_json(r.ci_lo)},
            {"ci_hi", opt_json(r.ci_hi)}, {"calls", r.calls}, {"seed", r.seed}};
  if (full) {
    j["components"] = r.components;
    j["method"] = r.method;
    j["ci_method"] = r.ci_method;
    j["warnings"] = r.warnings;
    j["out_of_range"] = r.out_of_range;
    if (!r.error.empty()) j["error"] = r.error;
  }
  return j;
}

inline json report_to_json(const RunReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) rows.push_back(row_to_json(r, true));
  return {{"tool", "gms"},
          {"version", kToolVersion},
          {"config", to_json(rep.config)},
          {"config_hash", config_hash(rep.config)},
          {"seed", rep.config.seed},
          {"rows", rows},
          {"total_calls", rep.total_calls},
          {"counted_calls", rep.counted_calls}};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

inline void write_timing(const std::filesystem::path& dir, double seconds, std::size_t workers) {
  write_text(dir / "timing.json", json{{"seconds", seconds}, {"workers", workers}}.dump(2) + "\n");
}

/// estimates.csv (or estimates.json), report.json and timing.json. Timing
/// lives in its own file so the other outputs are reproducible byte for byte.
inline void write_run_outputs(const RunReport& rep, const std::filesystem::path& dir, const std::string& format) {
  std::filesystem::create_directories(dir);
  if (format == "json") {
    json rows = json::array();
    for (const auto& r : rep.rows) rows.push_back(row_to_json(r, false));
    write_text(dir / "estimates.json", rows.dump(2) + "\n");
  } else {
    std::ostringstream os;
    write_estimates_csv(os, rep.rows);
    write_text(dir / "estimates.csv", os.str());
  }
  write_text(dir / "report.json", report_to_json(rep).dump(2) + "\n");
  write_timing(dir, rep.seconds, rep.workers);
}

inline void write_convergence_outputs(const ConvergenceReport& rep, const std::filesystem::path& dir,
                                      const std::string& format, std::size_t workers) {
  std::filesystem::create_directories(dir);
  if (format == "json") {
    json rows = json::array();
    for (const auto& c : rep.rows) {
      json j = row_to_json(c.row, false);
      j["budget"] = c.budget;
      j["replicate"] = c.replicate;
      rows.push_back(j);
    }
    write_text(dir / "convergence.json", rows.dump(2) + "\n");
  } else {
    std::ostringstream os;
    os << "n,N,family,estimator,subset,replicate,seed,estimate,sigma\n";
    for (const auto& c : rep.rows)
      os << c.budget << ',' << c.row.n << ',' << c.row.family << ',' << c.row.estimator << ','
         << csv_field(c.row.subset) << ',' << c.replicate << ',' << c.row.seed << ',' << format_double(c.row.value)
         << ',' << format_double(c.row.sigma) << '\n';
    write_text(dir / "convergence.csv", os.str());
  }
  json summary = {{"tool", "gms"},
                  {"version", kToolVersion},
                  {"config", to_json(rep.config)},
                  {"config_hash", config_hash(rep.config)},
                  {"total_calls", rep.total_calls},
                  {"counted_calls", rep.counted_calls},
                  {"rows", rep.rows.size()}};
  write_text(dir / "report.json", summary.dump(2) + "\n");
  write_timing(dir, rep.seconds, workers);
}

inline std::string map_file_name(const IndexMap& m) {
  std::string label = m.subset.label();
  std::replace(label.begin(), label.end(), ' ', '_');
  return "map_u" + label;
}

inline void write_map_outputs(const MapReport& rep, const std::filesystem::path& dir, const std::string& format,
                              std::size_t workers) {
  std::filesystem::create_directories(dir);
  json maps = json::array(), values = json::array();
  for (const auto& m : rep.maps) {
    double lo = INFINITY, hi = -INFINITY;
    KahanSum sum;
    std::size_t ok = 0;
    for (double v : m.values)
      if (!std::isnan(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum.add(v);
        ++ok;
      }
    json entry = {{"subset", m.subset.label()}, {"missing", m.missing},
                  {"min", ok ? json(lo) : json(nullptr)}, {"max", ok ? json(hi) : json(nullptr)},
                  {"mean", ok ? json(sum.value() / static_cast<double>(ok)) : json(nullptr)}};
    if (format == "json") {
      json vals = json::array();
      for (double v : m.values) vals.push_back(std::isnan(v) ? json(nullptr) : json(v));
      json full = entry;
      full["values"] = vals;
      values.push_back(full);
    } else {
      std::ostringstream os;
      write_field_csv(os, m.grid, m.values);
      write_text(dir / (map_file_name(m) + ".csv"), os.str());
      entry["file"] = map_file_name(m) + ".csv";
    }
    maps.push_back(entry);
  }
  json summary = {{"tool", "gms"},
                  {"version", kToolVersion},
                  {"config", to_json(rep.config)},
                  {"config_hash", config_hash(rep.config)},
                  {"grid", detail::grid_to_json(rep.config.model.grid)},
                  {"estimator", rep.config.map_estimator},
                  {"maps", maps},
                  {"total_calls", rep.total_calls},
                  {"counted_calls", rep.counted_calls}};
  write_text(dir / "report.json", summary.dump(2) + "\n");
  if (format == "json") write_text(dir / "maps.json", json{{"grid", summary["grid"]}, {"maps", values}}.dump(2) + "\n");
  write_timing(dir, rep.seconds, workers);
}

}  // namespace gms
