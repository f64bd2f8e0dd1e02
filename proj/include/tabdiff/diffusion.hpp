#pragma once

// Conditional DDPM: noise predictor, training loop and the guided reverse step.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tabdiff/designs.hpp"
#include "tabdiff/guidance.hpp"
#include "tabdiff/netcore.hpp"
#include "tabdiff/normalizer.hpp"
#include "tabdiff/schedule.hpp"

namespace tabdiff {

struct NoisePredictorShape {
  std::size_t width = 512;
  std::size_t layers = 6;
  std::size_t embed_dim = 128;
};

/// eps_theta(x_t, t, C). The condition passes through one dense layer to
/// embed_dim and is added to time_embed(t); the backbone sees [x_t | embedding].
class NoisePredictor {
 public:
  Network backbone;
  std::optional<Network> condition_layer;
  std::size_t design_dim = 0;
  std::size_t condition_dim = 0;
  std::size_t embed_dim = 0;

  static NoisePredictor create(std::size_t design_dim, std::size_t condition_dim,
                               const NoisePredictorShape& shape, Rng& rng);

  Vector predict(std::span<const double> x, std::size_t t, std::span<const double> cond) const;

  struct BatchTrace {
    ForwardTrace backbone;
    ForwardTrace condition;
  };
  struct BatchGradients {
    ParameterSet backbone;
    std::optional<ParameterSet> condition;
    Matrix input;  // d loss / d x_t
  };

  /// Rows of `x` and `cond` are samples; `t` holds one timestep per row.
  Matrix forward_batch(const Matrix& x, std::span<const std::size_t> t, const Matrix& cond,
                       BatchTrace* trace) const;
  BatchGradients backward_batch(const BatchTrace& trace, const Matrix& grad_output) const;

 private:
  Matrix embedding(std::span<const std::size_t> t, const Matrix& cond, ForwardTrace* trace) const;
};

struct DiffusionModel {
  NoisePredictor eps;
  NoiseSchedule schedule;
  Normalizer design_stats;
  /// Statistics of [perf, env...].
  Normalizer condition_stats;
  std::vector<std::string> environment;

  std::size_t design_dim() const { return eps.design_dim; }
  /// Physical condition -> normalized network input.
  Vector encode_condition(const ConditionVector& c) const;
};

/// Builds an untrained model whose normalization is fitted on `data`.
DiffusionModel make_model(const TabularDataset& data, const NoiseSchedule& schedule,
                          const NoisePredictorShape& shape, std::uint64_t seed);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  /// Optional per-epoch callback (epoch index, mean loss).
  std::function<void(std::size_t, double)> on_epoch;
};

struct TrainRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

/// Noise-prediction training. `x0` and `cond` must already be normalized with the
/// model's stored statistics. The per-sample loss is the mean squared error over
/// coordinates. Throws NumericError naming the epoch and batch on a non-finite loss.
std::vector<TrainRecord> train(DiffusionModel& model, const std::vector<Vector>& x0,
                               const std::vector<Vector>& cond, const TrainConfig& cfg);

struct GuidanceNets {
  const FeasibilityClassifier* classifier = nullptr;
  const PerformancePredictor* predictor = nullptr;
};

/// Throws ConfigError if an enabled term with a nonzero weight has no network.
void check_guidance(const GuidanceNets& nets, const GuidanceConfig& cfg);

/// One reverse step with an explicit noise draw `z` (ignored when t == 1):
///   x_{t-1} = 1/sqrt(a_t) (x_t - (1-a_t)/sqrt(1-abar_t) eps) + sigma_t Z (1-gamma)
///             + gamma grad f(x_t) - lambda grad (C_t - P(x_t))^2
/// All vectors are in normalized units.
Vector guided_step(const DiffusionModel& model, const GuidanceNets& nets,
                   std::span<const double> x_t, std::size_t t, std::span<const double> cond,
                   const GuidanceConfig& guidance, std::span<const double> z);

/// Same, drawing Z ~ N(0, I) from `rng` when t > 1.
Vector guided_step(const DiffusionModel& model, const GuidanceNets& nets,
                   std::span<const double> x_t, std::size_t t, std::span<const double> cond,
                   const GuidanceConfig& guidance, Rng& rng);

/// Runs one chain from X_T to X_0 in normalized units.
Vector sample_chain(const DiffusionModel& model, const GuidanceNets& nets,
                    std::span<const double> cond, const GuidanceConfig& guidance,
                    std::uint64_t seed, std::size_t chain);

/// Called once per finished chain, possibly from a worker thread.
using ChainCallback = std::function<void()>;

/// n designs in physical units; chain i uses the streams derived from (seed, i),
/// so the output does not depend on thread scheduling.
std::vector<Vector> sample(const DiffusionModel& model, const GuidanceNets& nets,
                           const ConditionVector& condition, std::size_t n,
                           const GuidanceConfig& guidance, std::uint64_t seed,
                           const ChainCallback& on_chain = {});

}  // namespace tabdiff
