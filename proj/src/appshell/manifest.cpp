#include "tabdiff/appshell/manifest.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>

#include "tabdiff/error.hpp"

namespace tabdiff {

using nlohmann::json;

json RunManifest::to_json() const {
  return {{"format", "tabdiff-run"},
          {"run_id", run_id},
          {"command", command},
          {"seed", seed},
          {"config", config},
          {"inputs", inputs},
          {"outputs", outputs},
          {"wall_clock_seconds", wall_clock_seconds},
          {"metrics", metrics}};
}

RunManifest RunManifest::from_json(const json& j) {
  if (j.value("format", "") != "tabdiff-run") throw ParseError("not a run manifest");
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.config = j.at("config");
  m.inputs = j.value("inputs", std::vector<std::string>{});
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  m.metrics = j.value("metrics", json::object());
  return m;
}

std::string new_run_id(const std::string& command) {
  static std::atomic<std::uint64_t> counter{0};
  static const std::uint32_t process_tag = std::random_device{}();
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  char tail[32];
  std::snprintf(tail, sizeof tail, "%08x-%llu", process_tag, static_cast<unsigned long long>(counter++));
  return command + "-" + stamp + "-" + tail;
}

void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << m.to_json().dump(2) << '\n';
}

RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("manifest not found: " + path.string());
  try {
    return RunManifest::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError("malformed manifest " + path.string() + ": " + e.what());
  }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& output, bool is_directory) {
  if (is_directory) return output / "manifest.json";
  return std::filesystem::path(output.string() + ".manifest.json");
}

}  // namespace tabdiff
