#include "cnv/harness.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "cnv/error.hpp"
#include "harness_internal.hpp"

namespace cnv {

using nlohmann::json;

std::string_view version_tag() { return CNV_VERSION; }

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::size_t error_index = count;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

std::uint64_t replicate_key(std::int64_t n, std::size_t index) {
  return (static_cast<std::uint64_t>(n) << 32) | static_cast<std::uint64_t>(index);
}

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_outputs(const ExperimentOutput& output, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir.string() + ": " + ec.message());
  auto write = [&dir](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + (dir / name).string());
    out << text;
  };
  write("report.json", output.report.dump(2) + "\n");
  for (const auto& [name, text] : output.files) write(name, text);
}

ExperimentOutput run_experiment(const ScenarioConfig& config, const RunOptions& options) {
  switch (config.experiment) {
    case ExperimentKind::simulate: return run_simulate(config, options);
    case ExperimentKind::converge: return run_convergence_study(config, options);
    case ExperimentKind::verify_identities: return run_verify(config, options);
    case ExperimentKind::moments: return run_moments(config, options);
    case ExperimentKind::spectrum: return run_spectrum(config, options);
    case ExperimentKind::adjudicate_case2: return adjudicate_case2(config, options);
    case ExperimentKind::toy: return run_toy(config, options);
    case ExperimentKind::all_or_nothing: return run_all_or_nothing(config, options);
  }
  throw ValidationError("unknown experiment");
}

namespace detail {

json moment_params_json(const MomentParams& p) {
  return json{{"alpha", p.alpha}, {"a2", p.a2}, {"a3", p.a3}, {"b2", p.b2}, {"b3", p.b3}};
}

json report_header(const ScenarioConfig& config, const InheritanceFamily& family) {
  json h;
  h["tool"] = "cnvsim";
  h["version"] = version_tag();
  h["experiment"] = to_string(config.experiment);
  h["config"] = config_to_json(config);
  h["moment_params"] = moment_params_json(family.moment_params());
  const auto quoted = family.quoted_moment_params();
  h["quoted_moment_params"] = quoted ? moment_params_json(*quoted) : json();
  return h;
}

std::vector<double> observation_grid(const ScenarioConfig& config) {
  if (config.observation_grid.empty()) return {config.t_end};
  return config.observation_grid;
}

CsvBuilder::CsvBuilder(std::vector<std::string> header) : columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) text_ += ',';
    text_ += header[i];
  }
  text_ += '\n';
}

CsvBuilder& CsvBuilder::cell(double value) { return cell(format_number(value)); }

CsvBuilder& CsvBuilder::cell(std::int64_t value) { return cell(std::to_string(value)); }

CsvBuilder& CsvBuilder::cell(const std::string& value) {
  if (in_row_++) text_ += ',';
  text_ += value;
  return *this;
}

void CsvBuilder::end_row() {
  if (in_row_ != columns_) throw std::logic_error("CSV row has the wrong number of cells");
  text_ += '\n';
  in_row_ = 0;
}

void finalize_checks(ExperimentOutput& out) {
  bool ok = true;
  for (const auto& [name, value] : out.report["checks"].items()) {
    if (value.is_boolean()) ok = ok && value.get<bool>();
  }
  out.passed = ok;
  out.report["passed"] = ok;
}

std::size_t sde_paths(const ScenarioConfig& config) {
  return config.sde.paths > 0 ? static_cast<std::size_t>(config.sde.paths) : static_cast<std::size_t>(config.replicates);
}

}  // namespace detail

}  // namespace cnv
