#pragma once

// Mask-based RePaint inference on a pre-trained conditional model: the known
// coordinates are re-noised from the reference at every step and spliced into
// the generated state, with U resampling passes per denoising step.

#include <span>
#include <vector>

#include "tabdiff/diffusion.hpp"
#include "tabdiff/mask.hpp"

namespace tabdiff {

enum class AlignmentMode {
  /// sqrt(abar_{t-1}) x0 + sqrt(1 - abar_{t-1}) eps, the forward marginal at t-1.
  Canonical,
  /// sqrt(a_t) x0 + (1 - a_t) eps, kept for comparison with the canonical form.
  Literal,
};

struct RepaintConfig {
  std::size_t resample = 20;  // U
  GuidanceConfig guidance;
  std::uint64_t seed = 0;
  AlignmentMode alignment = AlignmentMode::Canonical;
};

/// Known part at level t-1 for a given noise draw (ignored when t == 1).
Vector align_known(std::span<const double> x0, std::size_t t, const NoiseSchedule& sched,
                   std::span<const double> eps, AlignmentMode mode = AlignmentMode::Canonical);
/// Draws eps ~ N(0, I) from `rng` when t > 1.
Vector align_known(std::span<const double> x0, std::size_t t, const NoiseSchedule& sched,
                   Rng& rng, AlignmentMode mode = AlignmentMode::Canonical);

/// (1 - m) * generated + m * known.
Vector splice(std::span<const double> generated, std::span<const double> known, const Mask& mask);

/// x_t = sqrt(1 - beta_{t-1}) x_{t-1} + sqrt(beta_{t-1}) z; needs 2 <= t <= T.
Vector renoise(std::span<const double> x_prev, std::size_t t, const NoiseSchedule& sched,
               std::span<const double> z);
Vector renoise(std::span<const double> x_prev, std::size_t t, const NoiseSchedule& sched, Rng& rng);

/// n completed designs in physical units. `reference` is in physical units; the
/// masked coordinates of every output equal it exactly.
std::vector<Vector> repaint_sample(const DiffusionModel& model, const GuidanceNets& nets,
                                   std::span<const double> reference, const Mask& mask,
                                   const ConditionVector& condition, const RepaintConfig& cfg,
                                   std::size_t n, const ChainCallback& on_chain = {});

}  // namespace tabdiff
