#pragma once

// Helpers shared by the experiment implementations.

#include <string>
#include <vector>

#include <json.hpp>

#include "cnv/config.hpp"
#include "cnv/harness.hpp"
#include "cnv/inheritance.hpp"
#include "cnv/rng.hpp"

namespace cnv::detail {

/// Common report fields: tool, version, resolved config, moment parameters.
nlohmann::json report_header(const ScenarioConfig& config, const InheritanceFamily& family);

nlohmann::json moment_params_json(const MomentParams& p);

/// Observation grid with t_end appended when the configured grid is empty.
std::vector<double> observation_grid(const ScenarioConfig& config);

/// Row-oriented CSV text with a fixed header.
class CsvBuilder {
 public:
  explicit CsvBuilder(std::vector<std::string> header);
  CsvBuilder& cell(double value);
  CsvBuilder& cell(std::int64_t value);
  CsvBuilder& cell(const std::string& value);
  void end_row();
  std::string str() const { return text_; }

 private:
  std::size_t columns_;
  std::size_t in_row_ = 0;
  std::string text_;
};

/// Finalises `passed` from the "checks" object of the report.
void finalize_checks(ExperimentOutput& out);

std::size_t sde_paths(const ScenarioConfig& config);

}  // namespace cnv::detail
