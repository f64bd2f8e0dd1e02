#pragma once

// Shared helpers for the unit tests: finite-difference oracles, tiny models and
// scratch directories.

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "tabdiff/diffusion.hpp"
#include "tabdiff/netcore.hpp"

namespace testing {

inline double rel_err(double a, double b, double floor = 1e-7) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double central_difference(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Eps-free model: zero backbone weights make the noise predictor output 0.
inline tabdiff::DiffusionModel zero_model(std::size_t dim, std::size_t steps) {
  tabdiff::Rng rng(1);
  tabdiff::DiffusionModel m;
  m.eps = tabdiff::NoisePredictor::create(dim, 1, {8, 2, 4}, rng);
  m.eps.backbone.params = tabdiff::ParameterSet::zeros(m.eps.backbone.spec);
  m.schedule = tabdiff::build_schedule(steps, 1e-3, 0.3);
  m.design_stats = tabdiff::Normalizer::identity(dim);
  m.condition_stats = tabdiff::Normalizer::identity(1);
  return m;
}

/// Small randomly initialised model (untrained) for sampler plumbing tests.
inline tabdiff::DiffusionModel random_model(std::size_t dim, std::size_t steps, std::uint64_t seed = 3) {
  tabdiff::Rng rng(seed);
  tabdiff::DiffusionModel m;
  m.eps = tabdiff::NoisePredictor::create(dim, 1, {8, 3, 4}, rng);
  m.schedule = tabdiff::build_schedule(steps, 1e-3, 0.3);
  m.design_stats = tabdiff::Normalizer::identity(dim);
  m.condition_stats = tabdiff::Normalizer::identity(1);
  return m;
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tabdiff-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
