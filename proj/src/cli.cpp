#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "cnv/error.hpp"
#include "cnv/harness.hpp"

namespace cnv {

namespace {

constexpr const char* kSubcommands[] = {"simulate", "converge",         "verify-identities", "moments",
                                        "spectrum", "adjudicate-case2", "toy",               "all-or-nothing"};

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Copy-number population simulator and limit-theory checks", "cnvsim"};
  app.set_version_flag("--version", std::string(version_tag()));
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<int> replicates;
  unsigned threads = 0;
  bool check = false;
  for (const char* name : kSubcommands) {
    auto* sub = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    sub->add_option("--config", config_path, "JSON scenario file (defaults apply when omitted)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed, overrides the config");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--replicates", replicates, "replicate count, overrides the config")->check(CLI::PositiveNumber);
    sub->add_option("--threads", threads, "worker threads (0 = all cores)");
    sub->add_flag("--check", check, "exit with status 2 when a check fails");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    ScenarioConfig config = config_path.empty() ? ScenarioConfig{} : load_config(config_path);
    config.experiment = parse_experiment_kind(name);
    if (seed) config.master_seed = *seed;
    if (replicates) config.replicates = *replicates;
    std::filesystem::path dir = config.output_dir;
    if (!out_dir.empty()) {
      dir = out_dir;
    } else if (const char* env = std::getenv("CNVSIM_OUT"); env && *env) {
      dir = env;
    }

    const auto output = run_experiment(config, RunOptions{threads});
    write_outputs(output, dir);
    std::cout << name << ": " << (output.passed ? "all checks passed" : "some checks failed") << ", wrote "
              << (dir / "report.json").string() << '\n';
    const bool enforce = check || config.experiment == ExperimentKind::verify_identities;
    return enforce && !output.passed ? 2 : 0;
  } catch (const ValidationError& e) {
    std::cerr << "cnvsim: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeLimitError& e) {
    std::cerr << "cnvsim: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cnv
