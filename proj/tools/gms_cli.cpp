// gms: command-line runner for general metric-space sensitivity indices.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gms/config.hpp"
#include "gms/error.hpp"
#include "gms/runner.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string out;
  std::string format = "csv";
};

gms::RunConfig load(const Options& o) {
  gms::RunConfig cfg = gms::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.workers = o.workers;
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

void print_rows(const std::vector<gms::ResultRow>& rows) {
  for (const auto& r : rows) {
    std::cout << "u={" << r.subset << "} " << r.family << '/' << r.estimator << "  N=" << r.n;
    if (r.value) {
      std::printf("  value=%.6f", *r.value);
      if (r.sigma) std::printf("  sigma=%.4g", *r.sigma);
      if (r.ci_lo) std::printf("  ci=[%.6f, %.6f]", *r.ci_lo, *r.ci_hi);
    } else {
      std::cout << "  error: " << r.error;
    }
    std::cout << '\n';
    for (const auto& w : r.warnings) std::cout << "    warning: " << w << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"General metric-space sensitivity indices (Sobol, Cramer-von-Mises, ball families)"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool needs_output) {
    sub->add_option("--config", opt.config, "run configuration (JSON), or a report.json to replay")->required();
    sub->add_option("--seed", opt.seed, "master seed (overrides the config)");
    if (needs_output) {
      sub->add_option("--workers", opt.workers, "worker threads")->check(CLI::PositiveNumber);
      sub->add_option("--out", opt.out, "output directory (overrides the config)");
      sub->add_option("--format", opt.format, "output format")->check(CLI::IsMember({"csv", "json"}));
    }
  };
  auto* estimate = app.add_subcommand("estimate", "estimate indices for every (subset, family, estimator)");
  add_common(estimate, true);
  auto* converge = app.add_subcommand("converge", "convergence study over a budget grid");
  add_common(converge, true);
  auto* map = app.add_subcommand("map", "per-location sensitivity maps for field outputs");
  add_common(map, true);
  auto* validate = app.add_subcommand("validate-config", "check a configuration and print the resolved setup");
  add_common(validate, false);

  CLI11_PARSE(app, argc, argv);

  try {
    const gms::RunConfig cfg = load(opt);
    const std::filesystem::path dir = cfg.output_dir;
    if (validate->parsed()) {
      std::cout << "ok: " << opt.config << "\n"
                << "  model " << cfg.model.name << " (p=" << cfg.model.input_count() << ", "
                << cfg.model.output_kind() << " outputs)\n";
      if (cfg.n || cfg.budget)
        std::cout << "  N=" << cfg.sample_size() << " per design, " << cfg.calls_for(cfg.sample_size())
                  << " model calls (" << (cfg.shared_design ? "shared" : "independent") << " design)\n";
      std::cout << "  config hash " << gms::config_hash(cfg) << '\n';
      return 0;
    }
    if (estimate->parsed()) {
      const auto rep = gms::run(cfg, opt.workers);
      gms::write_run_outputs(rep, dir, opt.format);
      print_rows(rep.rows);
      std::cout << "calls: " << rep.counted_calls << " (expected " << rep.total_calls << ")\n"
                << "wrote " << dir.string() << '\n';
      return 0;
    }
    if (converge->parsed()) {
      const auto rep = gms::convergence_study(cfg, opt.workers);
      gms::write_convergence_outputs(rep, dir, opt.format, opt.workers);
      std::cout << rep.rows.size() << " rows, " << rep.counted_calls << " calls; wrote " << dir.string() << '\n';
      return 0;
    }
    if (map->parsed()) {
      const auto rep = gms::map_study(cfg, opt.workers);
      gms::write_map_outputs(rep, dir, opt.format, opt.workers);
      for (const auto& m : rep.maps)
        std::cout << "u={" << m.subset.label() << "}: " << m.values.size() << " nodes, " << m.missing << " missing\n";
      std::cout << "calls: " << rep.counted_calls << "; wrote " << dir.string() << '\n';
      return 0;
    }
  } catch (const gms::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
