#pragma once

// Feasibility classifier f_phi and performance predictor P_perf, plus the two
// gradient terms that steer the reverse diffusion step.
//
// Both nets see the (possibly noisy) normalized design concatenated with a
// sinusoidal embedding of the timestep; t = 0 means a clean design.

#include <optional>
#include <span>
#include <vector>

#include "tabdiff/netcore.hpp"
#include "tabdiff/schedule.hpp"

namespace tabdiff {

struct GuidanceConfig {
  double gamma = 0.7;   // classifier weight
  double lambda = 0.3;  // performance weight
  double target = 0.0;  // performance target, physical units
  bool use_classifier = true;
  bool use_performance = true;
  /// true: reverse noise is sigma_t * Z * (1 - gamma); false: sigma_t * Z.
  bool literal_noise_coupling = true;

  double effective_gamma() const { return use_classifier ? gamma : 0.0; }
  double effective_lambda() const { return use_performance ? lambda : 0.0; }
  /// Throws ConfigError for negative weights.
  void validate() const;
};

class FeasibilityClassifier {
 public:
  Network net;
  std::size_t design_dim = 0;
  std::size_t embed_dim = 0;

  /// MLP with SiLU hidden layers and a sigmoid output; the default widths are
  /// the full-size [128, 64, 64, 64].
  static FeasibilityClassifier create(std::size_t design_dim, std::size_t embed_dim,
                                      const std::vector<std::size_t>& widths, Rng& rng);

  double probability(std::span<const double> x, std::size_t t = 0) const;
  /// d f / d x
  Vector gradient(std::span<const double> x, std::size_t t = 0) const;
};

class PerformancePredictor {
 public:
  Network net;
  std::size_t design_dim = 0;
  std::size_t embed_dim = 0;
  double target_mean = 0.0;
  double target_std = 1.0;

  /// Residual net, SiLU, scalar output; full size is width 512 with 6 layers.
  static PerformancePredictor create(std::size_t design_dim, std::size_t embed_dim,
                                     std::size_t width, std::size_t layers, Rng& rng);

  /// Prediction in physical units.
  double predict(std::span<const double> x, std::size_t t = 0) const;
  double predict_normalized(std::span<const double> x, std::size_t t = 0) const;
  double normalize_target(double target) const { return (target - target_mean) / target_std; }
};

/// Input row [x | time_embed(t, embed_dim)].
Vector guidance_input(std::span<const double> x, std::size_t t, std::size_t embed_dim);

Vector classifier_grad(const FeasibilityClassifier& clf, std::span<const double> x,
                       std::size_t t = 0);

/// grad_x (target - P(x))^2 = -2 (target - P(x)) grad_x P(x), evaluated in the
/// predictor's normalized target units.
Vector performance_grad(const PerformancePredictor& pred, std::span<const double> x,
                        double target, std::size_t t = 0);

struct GuidanceTrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  /// When set, inputs are noised with q_sample at a random t for the share of
  /// each batch that is not clean.
  std::optional<NoiseSchedule> schedule;
  double clean_fraction = 0.5;
};

struct ClassifierReport {
  double final_loss = 0.0;
  double test_accuracy = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

struct PredictorReport {
  double final_loss = 0.0;
  double test_mape = 0.0;
  double test_r2 = 0.0;
  bool r2_defined = true;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

/// Binary cross-entropy training. `designs` are normalized; labels are 0/1.
/// Throws DataError unless both classes are present.
ClassifierReport train_classifier(FeasibilityClassifier& clf, const std::vector<Vector>& designs,
                                  const std::vector<int>& labels, const GuidanceTrainConfig& cfg);

/// MSE on z-scored targets. `designs` are normalized; `targets` are physical and
/// their statistics are stored in the predictor.
PredictorReport train_predictor(PerformancePredictor& pred, const std::vector<Vector>& designs,
                                const std::vector<double>& targets,
                                const GuidanceTrainConfig& cfg);

}  // namespace tabdiff
