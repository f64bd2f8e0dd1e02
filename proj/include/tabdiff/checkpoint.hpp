#pragma once

// JSON checkpoint container shared by the diffusion model and the guidance nets.
// Doubles are written in shortest round-trip form, so save -> load is bit-exact.

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "tabdiff/netcore.hpp"
#include "tabdiff/normalizer.hpp"

namespace tabdiff {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  std::string kind;
  std::map<std::string, Network> networks;
  Normalizer normalization;
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json to_json(const NetworkSpec& spec);
nlohmann::json to_json(const ParameterSet& params);
nlohmann::json to_json(const Normalizer& norm);
nlohmann::json to_json(const Checkpoint& ckpt);

NetworkSpec network_spec_from_json(const nlohmann::json& j);
ParameterSet parameters_from_json(const nlohmann::json& j, const NetworkSpec& spec);
Normalizer normalizer_from_json(const nlohmann::json& j);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tabdiff
