#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "cnv/error.hpp"
#include "cnv/generator_algebra.hpp"
#include "cnv/harness.hpp"

using namespace cnv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cnvsim_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cnvsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int rc = cli_main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return rc;
}

ScenarioConfig small_config(ExperimentKind kind) {
  ScenarioConfig c;
  c.experiment = kind;
  c.n_list = {20, 40};
  c.replicates = 12;
  c.t_end = 0.3;
  c.observation_grid = {0.1, 0.3};
  c.sde.paths = 12;
  c.qv.replicates = 5;
  return c;
}

}  // namespace

TEST_CASE("config: defaults, overrides and strict keys") {
  const auto c = config_from_json(json::object());
  CHECK(c.experiment == ExperimentKind::simulate);
  CHECK(c.n_list == std::vector<std::int64_t>{100});
  CHECK(c.initial.kind == "iid-poisson");
  CHECK_FALSE(c.thresholds.tv_at_largest_n.has_value());

  const auto d = config_from_json(json::parse(R"({"experiment": "adjudicate-case2", "family": {"kind": "uniform"},
      "N_list": [10, 20], "thresholds": {"tv_at_largest_N": 0.05}})"));
  CHECK(d.experiment == ExperimentKind::adjudicate_case2);
  CHECK(d.family.kind == FamilyKind::uniform);
  CHECK(d.thresholds.tv_at_largest_n == 0.05);

  for (const char* bad : {R"({"replicate": 3})", R"({"family": {"kind": "binomial-biased", "beta": 1}})",
                          R"({"N_list": [20, 20]})", R"({"N_list": []})", R"({"experiment": "run"})",
                          R"({"replicates": 0})", R"({"t_end": 1, "observation_grid": [0.5, 2]})",
                          R"({"sde": {"dt": 0.01}})", R"({"initial": {"kind": "uniform"}})",
                          R"({"family": {"kind": "custom-table"}})", R"({"replicates": "many"})",
                          R"({"family": {"alpha": 30}, "N_list": [50]})"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(config_from_json(json::parse(bad)), ValidationError);
  }
}

TEST_CASE("config: serialisation round-trips") {
  auto c = small_config(ExperimentKind::converge);
  c.thresholds.tv_at_largest_n = 0.125;
  c.initial.histogram = {3, 4};
  const auto doc = config_to_json(c);
  CHECK(config_to_json(config_from_json(doc)) == doc);
  CHECK_FALSE(doc.contains("threads"));
}

TEST_CASE("config files: comments allowed, missing or broken files rejected") {
  const auto dir = scratch_dir("config");
  write_text(dir / "ok.json", "// scenario\n{\"replicates\": 7 /* small */}\n");
  CHECK(load_config(dir / "ok.json").replicates == 7);
  write_text(dir / "broken.json", "{\"replicates\": ");
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ValidationError);
  CHECK_THROWS_AS(load_config(dir / "absent.json"), ValidationError);
}

TEST_CASE("quantize_law") {
  const std::vector<double> law{0.5, 0.25, 0.25};
  CHECK(quantize_law(law, 8) == std::vector<std::int64_t>{4, 2, 2});
  // Equal remainders go to the smaller types.
  CHECK(quantize_law(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, 4) == std::vector<std::int64_t>{2, 1, 1});
  for (double z : {0.0, 0.5, 2.0, 7.0}) {
    for (std::int64_t n : {1, 13, 200}) {
      const auto law_z = xi_map(FixedPointKind::negative_binomial, z).table;
      const auto counts = quantize_law(law_z, n);
      CHECK(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}) == n);
      for (std::size_t k = 0; k < counts.size(); ++k) CHECK(std::abs(counts[k] - law_z[k] * n) < 1.0);
    }
  }
}

TEST_CASE("initial specs") {
  FamilySpec binom;
  InitialConfig init;
  init.kind = "fixed-point";
  init.z0 = 1.5;
  const auto spec = make_initial_spec(init, binom, 100);
  const auto& h = std::get<Histogram>(spec);
  CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::int64_t{0}) == 100);

  FamilySpec aon;
  aon.kind = FamilyKind::all_or_nothing;
  CHECK_THROWS_AS(make_initial_spec(init, aon, 100), ValidationError);

  init.kind = "histogram";
  init.histogram = {5, 5};
  CHECK_NOTHROW(make_initial_spec(init, binom, 10));
  CHECK_THROWS_AS(make_initial_spec(init, binom, 11), ValidationError);

  init.kind = "point-mass";
  init.type = 3;
  CHECK(std::get<Histogram>(make_initial_spec(init, binom, 9)).counts == std::vector<std::int64_t>{0, 0, 0, 9});
}

TEST_CASE("parallel_for: every index once, smallest failing index rethrown") {
  for (unsigned threads : {1u, 2u, 5u}) {
    std::vector<std::atomic<int>> hits(37);
    parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) CHECK(h.load() == 1);
    try {
      parallel_for(20, threads, [](std::size_t i) {
        if (i == 7 || i == 13) throw std::runtime_error(std::to_string(i));
      });
      FAIL("no exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "7");
    }
  }
  parallel_for(0, 4, [](std::size_t) { FAIL("called"); });
}

TEST_CASE("replicate keys and number formatting") {
  CHECK(replicate_key(100, 3) != replicate_key(200, 3));
  CHECK(replicate_key(100, 3) != replicate_key(100, 4));
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678}) CHECK(std::stod(format_number(v)) == v);
}

TEST_CASE("reports: header fields and the overall verdict") {
  const auto out = run_experiment(small_config(ExperimentKind::simulate), {1});
  const auto& r = out.report;
  CHECK(r["tool"] == "cnvsim");
  CHECK(r["version"] == std::string(version_tag()));
  CHECK(r["experiment"] == "simulate");
  CHECK(r["config"] == config_to_json(small_config(ExperimentKind::simulate)));
  CHECK(r.contains("moment_params"));
  CHECK(r["checks"].is_object());
  bool all = true;
  for (const auto& [k, v] : r["checks"].items()) all = all && v.get<bool>();
  CHECK(r["passed"] == all);
  CHECK(out.passed == all);
  REQUIRE(out.files.size() == 2);
  CHECK(out.files[0].first == "paths.csv");
  CHECK(out.files[0].second.rfind("N,replicate,time,phi,rho2,rho3,tv\n", 0) == 0);
}

TEST_CASE("every experiment is identical for 1 and 3 threads") {
  for (auto kind : {ExperimentKind::simulate, ExperimentKind::converge, ExperimentKind::moments,
                    ExperimentKind::spectrum, ExperimentKind::toy, ExperimentKind::all_or_nothing,
                    ExperimentKind::verify_identities}) {
    CAPTURE(to_string(kind));
    const auto config = small_config(kind);
    const auto a = run_experiment(config, {1});
    const auto b = run_experiment(config, {3});
    CHECK(a.report.dump() == b.report.dump());
    CHECK(a.files == b.files);
  }
  auto adj = small_config(ExperimentKind::adjudicate_case2);
  adj.family.kind = FamilyKind::uniform;
  adj.initial.z0 = 1.0;
  adj.qv.horizon = 0.02;
  CHECK(run_experiment(adj, {1}).files == run_experiment(adj, {3}).files);
}

TEST_CASE("different seeds give different samples") {
  auto c = small_config(ExperimentKind::simulate);
  const auto a = run_experiment(c, {1});
  c.master_seed = 2;
  CHECK(a.files != run_experiment(c, {1}).files);
}

TEST_CASE("empty population mean: z0 = 0 stays at zero") {
  auto c = small_config(ExperimentKind::converge);
  c.initial.z0 = 0.0;
  const auto out = run_experiment(c, {1});
  for (const auto& rep : out.report["results"]["repetitions"]) {
    for (const auto& per_n : rep["per_N"]) {
      for (const auto& tv : per_n["tv_to_fixed_point"]) CHECK(tv["mean"] == 0.0);
      CHECK(per_n["ks_phi_end_vs_sde"]["limit"]["statistic"] == 0.0);
    }
  }
  auto s = small_config(ExperimentKind::simulate);
  s.initial.z0 = 0.0;
  const auto sim = run_experiment(s, {1});
  CHECK(sim.passed);
  auto adj = small_config(ExperimentKind::adjudicate_case2);
  adj.family.kind = FamilyKind::uniform;
  adj.initial.z0 = 0.0;
  const auto a = run_experiment(adj, {1});
  CHECK(a.report["results"]["verdict"] == "indistinguishable");
  CHECK(a.passed);
}

TEST_CASE("experiment preconditions") {
  auto adj = small_config(ExperimentKind::adjudicate_case2);
  CHECK_THROWS_AS(run_experiment(adj, {1}), ValidationError);
  auto aon = small_config(ExperimentKind::all_or_nothing);
  aon.initial.zero_count = 21;
  CHECK_THROWS_AS(run_experiment(aon, {1}), ValidationError);
}

TEST_CASE("cli: exit codes and output directory precedence") {
  const auto dir = scratch_dir("cli");
  CHECK(run_cli({}) == 1);
  CHECK(run_cli({"bogus"}) == 1);
  CHECK(run_cli({"simulate", "--config", (dir / "missing.json").string()}) == 1);
  CHECK(run_cli({"simulate", "--threads", "x"}) == 1);

  write_text(dir / "empty_table.txt", "# no rows\n");
  write_text(dir / "custom.json", R"({"family": {"kind": "custom-table", "custom_table_path": "empty_table.txt"},
                                      "N_list": [20], "replicates": 2, "t_end": 0.1})");
  CHECK(run_cli({"simulate", "--config", (dir / "custom.json").string(), "--out", (dir / "c").string()}) == 1);

  write_text(dir / "sim.json", R"({"N_list": [20], "replicates": 3, "t_end": 0.1, "output_dir": "from_config"})");
  const auto cfg = (dir / "sim.json").string();
  CHECK(run_cli({"simulate", "--config", cfg, "--out", (dir / "a").string(), "--seed", "5"}) == 0);
  const auto report = json::parse(read_text(dir / "a" / "report.json"));
  CHECK(report["config"]["master_seed"] == 5);
  CHECK(fs::exists(dir / "a" / "paths.csv"));

  CHECK(run_cli({"simulate", "--config", cfg, "--out", (dir / "b").string(), "--seed", "5", "--threads", "2"}) == 0);
  CHECK(read_text(dir / "a" / "paths.csv") == read_text(dir / "b" / "paths.csv"));
  CHECK(read_text(dir / "a" / "report.json") == read_text(dir / "b" / "report.json"));

  CHECK(run_cli({"simulate", "--config", cfg, "--out", (dir / "r").string(), "--replicates", "2"}) == 0);
  CHECK(json::parse(read_text(dir / "r" / "report.json"))["config"]["replicates"] == 2);

  ::setenv("CNVSIM_OUT", (dir / "env").string().c_str(), 1);
  CHECK(run_cli({"simulate", "--config", cfg}) == 0);
  ::unsetenv("CNVSIM_OUT");
  CHECK(fs::exists(dir / "env" / "report.json"));

  // Spectrum at N = 100 misses the 1% leading-order band.
  write_text(dir / "spec.json", R"({"N_list": [100]})");
  const auto spec = (dir / "spec.json").string();
  CHECK(run_cli({"spectrum", "--config", spec, "--out", (dir / "s").string()}) == 0);
  CHECK(run_cli({"spectrum", "--config", spec, "--out", (dir / "s").string(), "--check"}) == 2);
  CHECK(run_cli({"verify-identities", "--out", (dir / "v").string()}) == 0);
}
