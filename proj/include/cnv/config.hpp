#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cnv/inheritance.hpp"
#include "cnv/population.hpp"

namespace cnv {

enum class ExperimentKind {
  simulate,
  converge,
  verify_identities,
  moments,
  spectrum,
  adjudicate_case2,
  toy,
  all_or_nothing,
};

std::string_view to_string(ExperimentKind kind);
/// Accepts the CLI subcommand names, e.g. "verify-identities".
ExperimentKind parse_experiment_kind(std::string_view name);

struct FamilySpec {
  FamilyKind kind = FamilyKind::binomial_biased;
  double alpha = 0.0;
  /// Resolved against the directory of the config file.
  std::optional<std::filesystem::path> custom_table_path;
};

/// Initial population law.
///   iid-poisson, iid-negbin: i.i.d. types with mean z0
///   point-mass:   every individual has `type`
///   histogram:    explicit counts, must sum to N
///   fixed-point:  deterministic histogram closest to the fast equilibrium
///                 with mean z0 (largest-remainder rounding of N * law)
struct InitialConfig {
  std::string kind = "iid-poisson";
  double z0 = 1.0;
  int type = 0;
  std::vector<std::int64_t> histogram;
  /// Number of individuals at type 0 for the all-or-nothing chain.
  std::int64_t zero_count = 0;
};

struct SdeConfig {
  double dt = 1e-4;
  /// SDE ensemble size; 0 means "same as replicates".
  int paths = 0;
};

struct QvConfig {
  double horizon = 0.1;
  int cells_per_unit_time = 1000;
  int replicates = 200;
};

struct Thresholds {
  /// Pilot-calibrated bound on the mean TV distance at the largest N.
  std::optional<double> tv_at_largest_n;
  double ks_level = 0.01;
  /// Fraction of repetitions in which KS must not reject.
  double ks_min_fraction = 8.0 / 9.0;
  double sigma_band = 3.0;
  double qv_relative = 0.1;
  int adjudication_majority = 7;
  double absorbed_fraction = 0.99;
  double toy_relative = 0.2;
  double convergence_order = 0.9;
  double spectrum_relative = 0.01;
};

struct ScenarioConfig {
  ExperimentKind experiment = ExperimentKind::simulate;
  FamilySpec family;
  std::vector<std::int64_t> n_list{100};
  InitialConfig initial;
  double t_end = 1.0;
  /// Empty means {t_end}.
  std::vector<double> observation_grid;
  int replicates = 100;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  SdeConfig sde;
  int repetitions = 1;
  QvConfig qv;
  Thresholds thresholds;
};

/// Parses and validates a config document. Unknown keys are rejected.
/// Relative paths inside the document are resolved against `base_dir`.
ScenarioConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
/// Reads a JSON config file. Throws ValidationError if it cannot be read or parsed.
ScenarioConfig load_config(const std::filesystem::path& path);
/// The fully resolved config, as embedded in every report.
nlohmann::json config_to_json(const ScenarioConfig& config);

/// Family for population size n.
InheritanceFamily make_family(const FamilySpec& spec, std::int64_t n);
/// Initial law for population size n.
InitialSpec make_initial_spec(const InitialConfig& initial, const FamilySpec& family, std::int64_t n);
/// Largest-remainder rounding of n * law to a histogram summing to n.
std::vector<std::int64_t> quantize_law(std::span<const double> law, std::int64_t n);

}  // namespace cnv
