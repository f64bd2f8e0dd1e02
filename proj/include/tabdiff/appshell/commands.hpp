#pragma once

// Command implementations shared by the CLI and `replay`. Each command takes a
// fully resolved JSON configuration, writes its outputs and a run manifest, and
// returns the manifest.

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "tabdiff/appshell/manifest.hpp"

namespace tabdiff {

/// Commands: train, sample, repaint, eval, experiment, synth.
RunManifest run_command(const std::string& command, const nlohmann::json& config);

/// Re-executes a manifest. With `out_dir`, outputs are redirected there (same
/// file names) instead of overwriting the originals.
RunManifest replay_manifest(const RunManifest& manifest,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Reference design from "v1,v2,...", "path.csv" (first row) or "path.csv:row"
/// (0-based data row).
std::vector<double> parse_reference(const std::string& text, std::size_t dim,
                                    const std::vector<std::string>& names);

}  // namespace tabdiff
