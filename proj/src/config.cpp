#include "cnv/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "cnv/error.hpp"
#include "cnv/generator_algebra.hpp"

namespace cnv {

using nlohmann::json;

namespace {

constexpr std::pair<ExperimentKind, std::string_view> kExperimentNames[] = {
    {ExperimentKind::simulate, "simulate"},
    {ExperimentKind::converge, "converge"},
    {ExperimentKind::verify_identities, "verify-identities"},
    {ExperimentKind::moments, "moments"},
    {ExperimentKind::spectrum, "spectrum"},
    {ExperimentKind::adjudicate_case2, "adjudicate-case2"},
    {ExperimentKind::toy, "toy"},
    {ExperimentKind::all_or_nothing, "all-or-nothing"},
};

const std::set<std::string> kInitialKinds{"iid-poisson", "iid-negbin", "point-mass", "histogram", "fixed-point"};

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown key '" + key + "' in " + where);
    }
  }
}

// Reads obj[key] into out when present, converting type errors to ValidationError.
template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + "." + key + " has the wrong type");
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kExperimentNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (const auto& [k, n] : kExperimentNames) {
    if (n == name) return k;
  }
  throw ValidationError("unknown experiment '" + std::string(name) + "'");
}

ScenarioConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc,
             {"experiment", "family", "N_list", "initial", "t_end", "observation_grid", "replicates", "master_seed",
              "output_dir", "sde", "repetitions", "qv", "thresholds"},
             "config");
  ScenarioConfig c;
  if (auto it = doc.find("experiment"); it != doc.end()) {
    require(it->is_string(), "config.experiment must be a string");
    c.experiment = parse_experiment_kind(it->get<std::string>());
  }
  if (auto it = doc.find("family"); it != doc.end()) {
    check_keys(*it, {"kind", "alpha", "custom_table_path"}, "family");
    std::string kind = std::string(to_string(c.family.kind));
    read(*it, "kind", kind, "family");
    c.family.kind = parse_family_kind(kind);
    read(*it, "alpha", c.family.alpha, "family");
    std::string table;
    read(*it, "custom_table_path", table, "family");
    if (!table.empty()) c.family.custom_table_path = base_dir / table;
  }
  read(doc, "N_list", c.n_list, "config");
  if (auto it = doc.find("initial"); it != doc.end()) {
    check_keys(*it, {"kind", "z0", "type", "histogram", "zero_count"}, "initial");
    read(*it, "kind", c.initial.kind, "initial");
    read(*it, "z0", c.initial.z0, "initial");
    read(*it, "type", c.initial.type, "initial");
    read(*it, "histogram", c.initial.histogram, "initial");
    read(*it, "zero_count", c.initial.zero_count, "initial");
  }
  read(doc, "t_end", c.t_end, "config");
  read(doc, "observation_grid", c.observation_grid, "config");
  read(doc, "replicates", c.replicates, "config");
  read(doc, "master_seed", c.master_seed, "config");
  read(doc, "output_dir", c.output_dir, "config");
  if (auto it = doc.find("sde"); it != doc.end()) {
    check_keys(*it, {"dt", "paths"}, "sde");
    read(*it, "dt", c.sde.dt, "sde");
    read(*it, "paths", c.sde.paths, "sde");
  }
  read(doc, "repetitions", c.repetitions, "config");
  if (auto it = doc.find("qv"); it != doc.end()) {
    check_keys(*it, {"horizon", "cells_per_unit_time", "replicates"}, "qv");
    read(*it, "horizon", c.qv.horizon, "qv");
    read(*it, "cells_per_unit_time", c.qv.cells_per_unit_time, "qv");
    read(*it, "replicates", c.qv.replicates, "qv");
  }
  if (auto it = doc.find("thresholds"); it != doc.end()) {
    check_keys(*it,
               {"tv_at_largest_N", "ks_level", "ks_min_fraction", "sigma_band", "qv_relative",
                "adjudication_majority", "absorbed_fraction", "toy_relative", "convergence_order",
                "spectrum_relative"},
               "thresholds");
    auto& t = c.thresholds;
    if (auto tv = it->find("tv_at_largest_N"); tv != it->end() && !tv->is_null()) {
      require(tv->is_number(), "thresholds.tv_at_largest_N must be a number");
      t.tv_at_largest_n = tv->get<double>();
    }
    read(*it, "ks_level", t.ks_level, "thresholds");
    read(*it, "ks_min_fraction", t.ks_min_fraction, "thresholds");
    read(*it, "sigma_band", t.sigma_band, "thresholds");
    read(*it, "qv_relative", t.qv_relative, "thresholds");
    read(*it, "adjudication_majority", t.adjudication_majority, "thresholds");
    read(*it, "absorbed_fraction", t.absorbed_fraction, "thresholds");
    read(*it, "toy_relative", t.toy_relative, "thresholds");
    read(*it, "convergence_order", t.convergence_order, "thresholds");
    read(*it, "spectrum_relative", t.spectrum_relative, "thresholds");
  }

  require(!c.n_list.empty(), "N_list must not be empty");
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    require(c.n_list[i] >= 1, "N_list entries must be positive");
    require(i == 0 || c.n_list[i] > c.n_list[i - 1], "N_list must be strictly increasing");
  }
  require(c.replicates >= 1, "replicates must be at least 1");
  require(c.repetitions >= 1, "repetitions must be at least 1");
  require(c.t_end > 0.0 && std::isfinite(c.t_end), "t_end must be positive");
  require(std::is_sorted(c.observation_grid.begin(), c.observation_grid.end()), "observation_grid must be sorted");
  for (double g : c.observation_grid) require(g >= 0.0 && g <= c.t_end, "observation_grid must lie in [0, t_end]");
  require(c.sde.dt > 0.0 && c.sde.dt <= 1e-3, "sde.dt must lie in (0, 1e-3]");
  require(c.sde.paths >= 0, "sde.paths must be nonnegative");
  require(kInitialKinds.count(c.initial.kind) == 1, "unknown initial kind '" + c.initial.kind + "'");
  require(c.initial.z0 >= 0.0, "initial.z0 must be nonnegative");
  require(c.initial.type >= 0, "initial.type must be nonnegative");
  require(c.qv.horizon > 0.0, "qv.horizon must be positive");
  require(c.qv.cells_per_unit_time >= 1, "qv.cells_per_unit_time must be positive");
  require(c.qv.replicates >= 1, "qv.replicates must be positive");
  if (c.family.kind == FamilyKind::custom_table) {
    require(c.family.custom_table_path.has_value(), "custom-table families need family.custom_table_path");
  }
  for (auto n : c.n_list) {
    if (c.family.kind == FamilyKind::binomial_biased) {
      require(std::abs(c.family.alpha / static_cast<double>(n)) < 0.5, "alpha/N must lie inside (-1/2, 1/2)");
    }
  }
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ValidationError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

json config_to_json(const ScenarioConfig& c) {
  json family{{"kind", to_string(c.family.kind)}, {"alpha", c.family.alpha}};
  family["custom_table_path"] = c.family.custom_table_path ? json(c.family.custom_table_path->string()) : json();
  json initial{{"kind", c.initial.kind},
               {"z0", c.initial.z0},
               {"type", c.initial.type},
               {"histogram", c.initial.histogram},
               {"zero_count", c.initial.zero_count}};
  const auto& t = c.thresholds;
  json thresholds{{"tv_at_largest_N", t.tv_at_largest_n ? json(*t.tv_at_largest_n) : json()},
                  {"ks_level", t.ks_level},
                  {"ks_min_fraction", t.ks_min_fraction},
                  {"sigma_band", t.sigma_band},
                  {"qv_relative", t.qv_relative},
                  {"adjudication_majority", t.adjudication_majority},
                  {"absorbed_fraction", t.absorbed_fraction},
                  {"toy_relative", t.toy_relative},
                  {"convergence_order", t.convergence_order},
                  {"spectrum_relative", t.spectrum_relative}};
  return json{{"experiment", to_string(c.experiment)},
              {"family", family},
              {"N_list", c.n_list},
              {"initial", initial},
              {"t_end", c.t_end},
              {"observation_grid", c.observation_grid},
              {"replicates", c.replicates},
              {"master_seed", c.master_seed},
              {"output_dir", c.output_dir},
              {"sde", {{"dt", c.sde.dt}, {"paths", c.sde.paths}}},
              {"repetitions", c.repetitions},
              {"qv",
               {{"horizon", c.qv.horizon},
                {"cells_per_unit_time", c.qv.cells_per_unit_time},
                {"replicates", c.qv.replicates}}},
              {"thresholds", thresholds}};
}

InheritanceFamily make_family(const FamilySpec& spec, std::int64_t n) {
  CustomTable table;
  if (spec.kind == FamilyKind::custom_table) {
    if (!spec.custom_table_path) throw ValidationError("custom-table families need a table path");
    table = read_custom_table(*spec.custom_table_path);
  }
  return InheritanceFamily::make(spec.kind, spec.alpha, n, std::move(table));
}

std::vector<std::int64_t> quantize_law(std::span<const double> law, std::int64_t n) {
  std::vector<std::int64_t> counts(law.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t k = 0; k < law.size(); ++k) {
    const double target = law[k] * static_cast<double>(n);
    counts[k] = static_cast<std::int64_t>(std::floor(target));
    assigned += counts[k];
    remainders.emplace_back(target - std::floor(target), k);
  }
  // Ties broken towards smaller types so the result is reproducible.
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n && i < remainders.size(); ++i, ++assigned) ++counts[remainders[i].second];
  if (assigned < n) counts[0] += n - assigned;
  while (counts.size() > 1 && counts.back() == 0) counts.pop_back();
  return counts;
}

InitialSpec make_initial_spec(const InitialConfig& initial, const FamilySpec& family, std::int64_t n) {
  if (initial.kind == "iid-poisson") return IidPoisson{initial.z0};
  if (initial.kind == "iid-negbin") return IidNegBinomial{initial.z0};
  if (initial.kind == "point-mass") {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(initial.type) + 1, 0);
    counts.back() = n;
    return Histogram{counts};
  }
  if (initial.kind == "histogram") {
    const auto total = std::accumulate(initial.histogram.begin(), initial.histogram.end(), std::int64_t{0});
    if (total != n) {
      throw ValidationError("initial histogram sums to " + std::to_string(total) + " but N = " + std::to_string(n));
    }
    return Histogram{initial.histogram};
  }
  // fixed-point
  FixedPointKind kind;
  switch (family.kind) {
    case FamilyKind::binomial_biased: kind = FixedPointKind::poisson; break;
    case FamilyKind::uniform: kind = FixedPointKind::negative_binomial; break;
    default: throw ValidationError("fixed-point initial states need a binomial-biased or uniform family");
  }
  return Histogram{quantize_law(xi_map(kind, initial.z0).table, n)};
}

}  // namespace cnv
