#pragma once

// Run manifests: enough of each command's resolved configuration to re-execute
// it and reproduce its output files.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace tabdiff {

struct RunManifest {
  std::string run_id;
  std::string command;
  std::uint64_t seed = 0;
  /// Fully resolved command configuration; `replay` feeds it back unchanged.
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;
  nlohmann::json metrics = nlohmann::json::object();

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// "<command>-<utc timestamp>-<counter>", unique within and across processes
/// for practical purposes.
std::string new_run_id(const std::string& command);

void save_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

/// Manifest location for an output file ("<out>.manifest.json") or directory
/// ("<out>/manifest.json").
std::filesystem::path manifest_path_for(const std::filesystem::path& output, bool is_directory);

}  // namespace tabdiff
