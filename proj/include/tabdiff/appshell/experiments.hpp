#pragma once

// Canned experiment drivers over a trained bundle. Each produces one or more
// tables written as CSV plus a JSON report.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabdiff/appshell/bundle.hpp"

namespace tabdiff {

struct ReportTable {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;

  std::string to_csv() const;
  nlohmann::json to_json() const;
  /// Column index by name; throws IndexError.
  std::size_t column(const std::string& name) const;
};

struct ExperimentReport {
  std::string experiment;
  std::vector<ReportTable> tables;
  nlohmann::json summary = nlohmann::json::object();

  const ReportTable& table(const std::string& name) const;
  /// Writes <table>.csv for every table and report.json; returns the written paths.
  std::vector<std::filesystem::path> write(const std::filesystem::path& dir) const;
};

/// Settings shared by the drivers. Every field has a desk-scale default and can
/// be overridden from the --config JSON using the same key names.
struct ExperimentConfig {
  std::size_t n = 32;  // designs per setting
  std::uint64_t seed = 0;
  std::optional<double> target;     // default: median training label
  std::optional<Vector> reference;  // default: training row nearest the median label
  std::optional<double> gamma;
  std::optional<double> lambda;
  std::size_t resample = 10;  // U

  std::vector<std::size_t> params;                          // fix-scan; empty = all
  std::vector<std::pair<std::string, std::string>> groups;  // component-scan: name -> mask spec
  std::size_t prefix_max = 7;                               // prefix-scan: k = 0..prefix_max of /8
  std::size_t prd_clusters = 20;
  std::size_t mmd_reference_rows = 1000;
  std::size_t repeats = 30;                                 // stability
  std::size_t bins = 20;                                    // frequency
  bool frequency_generate = true;
  std::size_t null_trials = 1000;                           // correlation
  std::size_t null_rows = 200;
  std::size_t range_points = 11;                            // range-scan
  std::optional<double> range_lo;
  std::optional<double> range_hi;
  std::size_t replicates = 2;                               // doe
  std::vector<double> u_levels{20.0, 30.0};
  std::string doe_mask = "first-2/8";

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

const std::vector<std::string>& experiment_names();

/// Throws ConfigError for an unknown experiment name.
ExperimentReport run_experiment(const std::string& name, const ModelBundle& bundle,
                                const ExperimentConfig& cfg);

}  // namespace tabdiff
