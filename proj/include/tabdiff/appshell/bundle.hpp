#pragma once

// A trained model directory: the diffusion checkpoint, optional guidance nets,
// the schema, and a copy of the training data used by the experiment drivers.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabdiff/designs.hpp"
#include "tabdiff/error.hpp"
#include "tabdiff/diffusion.hpp"
#include "tabdiff/guidance.hpp"

namespace tabdiff {

struct ModelBundle {
  std::string name;
  DesignSchema schema;
  DiffusionModel model;
  std::optional<FeasibilityClassifier> classifier;
  std::optional<PerformancePredictor> predictor;
  /// "synthetic16", "naca-proxy" or empty for user data without a known oracle.
  std::string problem;
  TabularDataset training;
  nlohmann::json metadata = nlohmann::json::object();

  GuidanceNets nets() const;
  /// Training row whose performance is closest to the median label.
  Vector default_reference() const;
  /// Median training label.
  double default_target() const;
};

struct TrainPlan {
  std::size_t steps = 200;
  std::optional<double> beta_min;
  std::optional<double> beta_max;
  NoisePredictorShape shape{64, 6, 32};
  TrainConfig diffusion;

  bool train_classifier = true;
  std::vector<std::size_t> classifier_widths{128, 64, 64, 64};
  std::size_t guidance_embed_dim = 16;
  GuidanceTrainConfig classifier;

  bool train_predictor = true;
  std::size_t predictor_width = 64;
  std::size_t predictor_layers = 6;
  GuidanceTrainConfig predictor;

  NoiseSchedule schedule() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys raise ConfigError.
  static TrainPlan from_json(const nlohmann::json& j);
};

struct TrainOutcome {
  ModelBundle bundle;
  std::vector<TrainRecord> records;
  std::optional<ClassifierReport> classifier;
  std::optional<PredictorReport> predictor;
  double seconds = 0.0;
  nlohmann::json summary() const;
};

/// Trains the diffusion model on the feasible rows of `data` and, when enabled,
/// the predictor on the same rows and the classifier on `classifier_data`
/// (defaults to `data`; skipped with a note when it lacks both classes).
TrainOutcome train_bundle(const TabularDataset& data, const TrainPlan& plan,
                          const std::string& problem,
                          const TabularDataset* classifier_data = nullptr);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);
bool is_bundle_dir(const std::filesystem::path& dir);

/// Performance and feasibility of finished designs. Known problems use their
/// exact functions; otherwise the predictor (at t = 0) and classifier are used,
/// falling back to a bounds check.
class DesignEvaluator {
 public:
  explicit DesignEvaluator(const ModelBundle& bundle) : bundle_(bundle) {}

  bool has_exact() const;
  std::optional<double> exact(std::span<const double> design) const;
  std::optional<double> predicted(std::span<const double> design) const;
  /// exact if available, else predicted; throws ConfigError if neither.
  double performance(std::span<const double> design) const;
  bool feasible(std::span<const double> design) const;

 private:
  const ModelBundle& bundle_;
};

}  // namespace tabdiff
