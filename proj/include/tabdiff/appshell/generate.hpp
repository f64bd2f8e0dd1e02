#pragma once

// The single generation path behind the `sample`/`repaint` commands and
// POST /api/generate.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabdiff/appshell/bundle.hpp"
#include "tabdiff/mask.hpp"
#include "tabdiff/repaint.hpp"

namespace tabdiff {

struct GenerateRequest {
  ConditionVector condition;
  /// Empty spec: plain guided sampler. Otherwise RePaint with `reference`.
  std::string mask_spec;
  std::optional<Vector> reference;
  std::size_t n = 16;
  std::uint64_t seed = 0;
  std::optional<double> gamma;   // default: GuidanceConfig default when a classifier exists, else 0
  std::optional<double> lambda;  // default: GuidanceConfig default when a predictor exists, else 0
  std::size_t resample = 20;
  AlignmentMode alignment = AlignmentMode::Canonical;
  bool literal_noise_coupling = true;

  nlohmann::json to_json() const;
  /// Accepts the HTTP body shape; `condition` may be a number or {target, env}.
  static GenerateRequest from_json(const nlohmann::json& j);
};

struct GenerateResult {
  Mask mask;
  std::vector<Vector> designs;
  std::vector<std::optional<double>> predicted;
  std::vector<std::optional<double>> exact;
  std::vector<bool> feasible;
  double seconds = 0.0;
};

/// Resolved guidance settings for a request on a given bundle.
GuidanceConfig resolve_guidance(const ModelBundle& bundle, const GenerateRequest& req);

/// Throws SpecError for a malformed mask, ConfigError for a missing reference.
GenerateResult run_generate(const ModelBundle& bundle, const GenerateRequest& req,
                            const std::function<void(double)>& progress = {});

/// CSV columns: schema names, then perf_pred and perf (when known) and feasible.
void write_generate_csv(const std::filesystem::path& path, const ModelBundle& bundle,
                        const GenerateResult& result);

/// HTTP result payload: designs with fixed flags, predictions, feasibility and
/// either an airfoil polyline or the named parameter list. Contains no timing,
/// so identical requests give identical payloads.
nlohmann::json result_payload(const ModelBundle& bundle, const GenerateResult& result);

/// Parses "k=v,k=v" environment assignments.
std::vector<std::pair<std::string, double>> parse_env_assignments(const std::string& text);

}  // namespace tabdiff
