#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gms/config.hpp"
#include "gms/external.hpp"
#include "gms/runner.hpp"

using namespace gms;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = GMS_SOURCE_DIR;
const std::string kCli = GMS_CLI;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gms_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kToy = R"({
  "schema_version": 1,
  "model": {"name": "lognormal_toy"},
  "families": ["sobol", "cvm"],
  "subsets": [[1], [2]],
  "N": 2000,
  "estimators": ["gms", "pf", "pf_efficient"],
  "ci": {"method": "delta"},
  "seed": 99
})";

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + kCli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

// --- configuration -----------------------------------------------------------

TEST(Config, SamplesValidate) {
  for (const char* name : {"toy_indices.json", "toy_convergence.json", "plume_balls.json", "plume_map.json",
                           "external_ishigami.json"}) {
    EXPECT_NO_THROW(load_config((kSource / "samples" / name).string())) << name;
  }
}

TEST(Config, Parses) {
  const auto c = parse_config(kToy);
  EXPECT_EQ(c.model.name, "lognormal_toy");
  EXPECT_EQ(c.families.size(), 2u);
  EXPECT_EQ(c.n, 2000u);
  EXPECT_EQ(c.ci, CiMethod::Delta);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_FALSE(c.shared_design);
  EXPECT_EQ(c.calls_for(2000), 8000u);
}

TEST(Config, EmptyEstimatorList) {
  std::string t = kToy;
  t.replace(t.find(R"(["gms", "pf", "pf_efficient"])"), 29, "[]");
  EXPECT_NE(error_of(t).find("/estimators"), std::string::npos);
}

TEST(Config, SyntaxErrorReportsLineAndColumn) {
  const std::string msg = error_of("{\n  \"schema_version\": 1,\n  \"N\": ,\n}");
  EXPECT_NE(msg.find("cfg.json:3:"), std::string::npos) << msg;
}

TEST(Config, FieldDiagnostics) {
  std::string t = kToy;
  t.replace(t.find("\"N\": 2000"), 9, "\"N\": -5, \"colour\": 1");
  const std::string msg = error_of(t);
  EXPECT_NE(msg.find("/N"), std::string::npos) << msg;
  EXPECT_NE(msg.find("/colour: unknown key"), std::string::npos) << msg;
  EXPECT_NE(error_of(R"({"schema_version": 1, "model": {"name": "lognormal_toy"}, "families": ["sobol"],
      "subsets": [[3]], "N": 10, "estimators": ["gms"]})").find("/subsets"), std::string::npos);
  EXPECT_NE(error_of(R"({"schema_version": 1, "model": {"name": "plume", "H": 1}, "families": ["sobol"],
      "subsets": [[1]], "N": 10, "estimators": ["gms"]})").find("/families/0"), std::string::npos);
  EXPECT_NE(error_of(R"({"schema_version": 2, "model": {"name": "lognormal_toy"}, "families": ["sobol"],
      "subsets": [[1]], "N": 10, "estimators": ["gms"]})").find("/schema_version"), std::string::npos);
  EXPECT_NE(error_of(R"({"schema_version": 1, "model": {"name": "lognormal_toy"}, "families": ["cvm"],
      "subsets": [[1]], "N": 10, "estimators": ["pf"]})").find("/estimators"), std::string::npos);
}

TEST(Config, BudgetConventions) {
  auto c = parse_config(R"({"schema_version": 1, "model": {"name": "plume", "H": 1}, "families": ["metric_ball"],
      "subsets": [[1], [2], [3]], "budget": 4000, "design": "shared", "estimators": ["gms"]})");
  EXPECT_EQ(c.sample_size(), 1000u);  // n / (p + 1)
  EXPECT_EQ(c.calls_for(1000), 4000u);
  c.shared_design = false;
  EXPECT_EQ(c.sample_size(), 666u);  // n / (2p)
  EXPECT_EQ(c.calls_for(666), 3996u);
}

TEST(Config, HashIgnoresWorkersAndOutput) {
  auto a = parse_config(kToy);
  auto b = a;
  b.workers = 8;
  b.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 100;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(parse_config(to_json(a).dump())), config_hash(a));
}

// --- runs ----------------------------------------------------------------------

TEST(Run, CallCountsMatch) {
  const auto cfg = parse_config(kToy);
  const auto rep = run(cfg);
  EXPECT_EQ(rep.counted_calls, rep.total_calls);
  EXPECT_EQ(rep.total_calls, 8000u);
  // sobol: gms, pf, pf_efficient; cvm: gms -> 4 rows per subset
  EXPECT_EQ(rep.rows.size(), 8u);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.calls, 4000u);
    ASSERT_TRUE(r.value) << r.error;
    ASSERT_TRUE(r.ci_lo && r.ci_hi);
    EXPECT_LE(*r.ci_lo, *r.value);
    EXPECT_GE(*r.ci_hi, *r.value);
  }
}

TEST(Run, SharedDesignCalls) {
  auto cfg = parse_config(kToy);
  cfg.shared_design = true;
  const auto rep = run(cfg);
  EXPECT_EQ(rep.counted_calls, 6000u);
  EXPECT_EQ(rep.total_calls, 6000u);
}

TEST(Run, ByteIdenticalAcrossRunsAndWorkers) {
  const auto cfg = parse_config(kToy);
  std::string first;
  for (std::size_t w : {1u, 1u, 4u, 8u}) {
    const fs::path dir = scratch("run_w" + std::to_string(w));
    write_run_outputs(run(cfg, w), dir, "csv");
    const std::string csv = slurp(dir / "estimates.csv") + slurp(dir / "report.json");
    if (first.empty()) first = csv;
    EXPECT_EQ(csv, first) << "workers=" << w;
  }
  EXPECT_EQ(first.rfind("subset,family,estimator,N,value,sigma,ci_lo,ci_hi,calls,seed\n", 0), 0u);
}

TEST(Run, ReplayFromReport) {
  const auto cfg = parse_config(kToy);
  const fs::path dir = scratch("replay");
  write_run_outputs(run(cfg), dir, "csv");
  const auto again = load_config((dir / "report.json").string());
  EXPECT_EQ(config_hash(again), config_hash(cfg));
  const fs::path dir2 = scratch("replay2");
  write_run_outputs(run(again, 3), dir2, "csv");
  EXPECT_EQ(slurp(dir / "estimates.csv"), slurp(dir2 / "estimates.csv"));
}

TEST(Run, JsonFormat) {
  const fs::path dir = scratch("json");
  write_run_outputs(run(parse_config(kToy)), dir, "json");
  const auto j = nlohmann::json::parse(slurp(dir / "estimates.json"));
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j.size(), 8u);
  EXPECT_TRUE(fs::exists(dir / "timing.json"));
  EXPECT_EQ(slurp(dir / "report.json").find("seconds"), std::string::npos);
}

TEST(Run, FullSubsetWarns) {
  auto cfg = parse_config(kToy);
  cfg.subsets = {{1, 2}};
  const auto rep = run(cfg);
  for (const auto& r : rep.rows) {
    EXPECT_FALSE(r.warnings.empty());
    EXPECT_NEAR(*r.value, 1.0, 1e-12);
  }
}

TEST(Converge, SingleBudgetEqualsRun) {
  auto cfg = parse_config(kToy);
  cfg.n = 0;
  cfg.budgets = {8000};
  const auto conv = convergence_study(cfg);
  cfg.budgets.clear();
  cfg.budget = 8000;
  const auto rep = run(cfg);
  ASSERT_EQ(conv.rows.size(), rep.rows.size());
  for (std::size_t k = 0; k < rep.rows.size(); ++k) {
    EXPECT_EQ(conv.rows[k].row.value, rep.rows[k].value);
    EXPECT_EQ(conv.rows[k].row.sigma, rep.rows[k].sigma);
  }
  EXPECT_EQ(conv.counted_calls, conv.total_calls);
}

TEST(Converge, RowsPerBudgetAndReplicate) {
  const auto cfg = parse_config(R"({"schema_version": 1, "model": {"name": "lognormal_toy"}, "families": ["sobol"],
      "subsets": [[1], [2]], "design": "shared", "estimators": ["gms", "pf"],
      "convergence": {"min": 300, "max": 30000, "points": 3, "replicates": 2}, "seed": 4})");
  EXPECT_EQ(cfg.budgets, (std::vector<std::size_t>{300, 3000, 30000}));
  const auto rep = convergence_study(cfg, 2);
  EXPECT_EQ(rep.rows.size(), 3u * 2u * 2u * 2u);
  EXPECT_EQ(rep.counted_calls, rep.total_calls);
  EXPECT_EQ(rep.total_calls, 2u * (300 + 3000 + 30000));
  const fs::path dir = scratch("conv");
  write_convergence_outputs(rep, dir, "csv", 2);
  const std::string csv = slurp(dir / "convergence.csv");
  EXPECT_EQ(csv.rfind("n,N,family,estimator,subset,replicate,seed,estimate,sigma\n", 0), 0u);
}

TEST(Map, StudyWritesOneFilePerSubset) {
  auto cfg = load_config((kSource / "samples" / "plume_map.json").string());
  cfg.n = 100;
  cfg.model.grid.nx = 4;
  cfg.model.grid.ny = 4;
  const auto rep = map_study(cfg, 2);
  EXPECT_EQ(rep.maps.size(), 4u);
  EXPECT_EQ(rep.counted_calls, 500u);
  EXPECT_EQ(rep.total_calls, 500u);
  const fs::path dir = scratch("map");
  write_map_outputs(rep, dir, "csv", 2);
  for (int u = 1; u <= 4; ++u) EXPECT_TRUE(fs::exists(dir / ("map_u" + std::to_string(u) + ".csv")));
}

// --- external models ------------------------------------------------------------

TEST(External, LineProtocol) {
  const std::string cmd = "python3 \"" + (kSource / "samples" / "ishigami.py").string() + "\"";
  const std::vector<double> rows = {0.0, 0.0, 0.0, 1.0, 2.0, 3.0};
  const auto v = run_line_protocol(cmd, rows, 3, 1);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_NEAR(v[0][0], 0.0, 1e-15);
  EXPECT_NEAR(v[1][0], std::sin(1.0) + 7 * std::pow(std::sin(2.0), 2) + 0.1 * 81 * std::sin(1.0), 1e-12);
}

TEST(External, IshigamiRun) {
  auto cfg = load_config((kSource / "samples" / "external_ishigami.json").string());
  cfg.model.command = "python3 \"" + (kSource / "samples" / "ishigami.py").string() + "\"";
  cfg.n = 4000;
  cfg.families = {FamilyKind::SobolValue};
  const auto rep = run(cfg);
  EXPECT_EQ(rep.counted_calls, 16000u);  // shared design: N (1 + 3)
  EXPECT_EQ(rep.total_calls, 16000u);
  // Ishigami (a=7, b=0.1): S1 = 0.3139, S2 = 0.4424, S3 = 0
  const double want[3] = {0.3139, 0.4424, 0.0};
  for (const auto& r : rep.rows) {
    ASSERT_TRUE(r.value) << r.error;
    const int u = std::stoi(r.subset) - 1;
    EXPECT_NEAR(*r.value, want[u], 0.06) << r.subset << ' ' << r.estimator;
  }
}

TEST(External, FailureCarriesRow) {
  const std::string cmd = "python3 -c \"import sys\nfor i, l in enumerate(sys.stdin):\n  print(1.0 if i < 3 else 'oops')\"";
  try {
    run_line_protocol(cmd, std::vector<double>{1, 2, 3, 4, 5}, 1, 1);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
  EXPECT_THROW(run_line_protocol("exit 3", std::vector<double>{1, 2}, 1, 1), EvaluationError);
}

// --- command line ---------------------------------------------------------------

TEST(Cli, ValidateConfig) {
  const fs::path dir = scratch("cli_validate");
  EXPECT_EQ(run_cli("validate-config --config \"" + (kSource / "samples" / "toy_indices.json").string() + "\"",
                    dir / "log"), 0);
  EXPECT_NE(slurp(dir / "log").find("config hash"), std::string::npos);
  std::ofstream(dir / "bad.json") << "{\"schema_version\": 1, \"estimators\": []}";
  EXPECT_EQ(run_cli("validate-config --config \"" + (dir / "bad.json").string() + "\"", dir / "log2"), 2);
  EXPECT_NE(slurp(dir / "log2").find("/estimators"), std::string::npos);
  EXPECT_NE(run_cli("validate-config", dir / "log3"), 0);
  EXPECT_NE(run_cli("estimate --config x.json --format xml", dir / "log4"), 0);
}

TEST(Cli, EstimateIsDeterministicAcrossWorkers) {
  const fs::path dir = scratch("cli_est");
  std::ofstream(dir / "toy.json") << kToy;
  std::string first;
  for (int w : {1, 4, 8}) {
    const fs::path out = dir / ("w" + std::to_string(w));
    ASSERT_EQ(run_cli("estimate --config \"" + (dir / "toy.json").string() + "\" --workers " + std::to_string(w) +
                          " --out \"" + out.string() + "\"",
                      dir / "log"),
              0)
        << slurp(dir / "log");
    const std::string got = slurp(out / "estimates.csv") + slurp(out / "report.json");
    if (first.empty()) first = got;
    EXPECT_EQ(got, first);
  }
  const fs::path seeded = dir / "seeded";
  ASSERT_EQ(run_cli("estimate --config \"" + (dir / "toy.json").string() + "\" --seed 5 --out \"" + seeded.string() +
                        "\" --format json",
                    dir / "log"),
            0);
  EXPECT_TRUE(fs::exists(seeded / "estimates.json"));
  EXPECT_EQ(load_config((seeded / "report.json").string()).seed, 5u);
}
