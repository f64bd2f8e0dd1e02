#include "tabdiff/repaint.hpp"

#include <algorithm>
#include <cmath>

#include "tabdiff/error.hpp"
#include "tabdiff/parallel.hpp"

namespace tabdiff {

Vector align_known(std::span<const double> x0, std::size_t t, const NoiseSchedule& sched,
                   std::span<const double> eps, AlignmentMode mode) {
  if (t < 1 || t > sched.steps)
    throw IndexError("alignment timestep " + std::to_string(t) + " outside 1.." + std::to_string(sched.steps));
  if (t > 1 && eps.size() != x0.size()) throw ShapeError("alignment noise length mismatch");
  double a = 0.0, b = 0.0;
  if (mode == AlignmentMode::Canonical) {
    const double abar = sched.alpha_bar_at(t - 1);
    a = std::sqrt(abar);
    b = std::sqrt(1.0 - abar);
  } else {
    const double alpha = sched.alpha_at(t);
    a = std::sqrt(alpha);
    b = 1.0 - alpha;
  }
  Vector out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = t > 1 ? a * x0[i] + b * eps[i] : a * x0[i];
  return out;
}

Vector align_known(std::span<const double> x0, std::size_t t, const NoiseSchedule& sched, Rng& rng,
                   AlignmentMode mode) {
  if (t < 1 || t > sched.steps)
    throw IndexError("alignment timestep " + std::to_string(t) + " outside 1.." + std::to_string(sched.steps));
  Vector eps;
  if (t > 1) eps = rng.gaussian_vector(x0.size());
  return align_known(x0, t, sched, eps, mode);
}

Vector splice(std::span<const double> generated, std::span<const double> known, const Mask& mask) {
  if (generated.size() != known.size() || generated.size() != mask.size())
    throw ShapeError("splice: generated, known and mask lengths differ");
  Vector out(generated.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] ? known[i] : generated[i];
  return out;
}

Vector renoise(std::span<const double> x_prev, std::size_t t, const NoiseSchedule& sched,
               std::span<const double> z) {
  if (t < 2 || t > sched.steps)
    throw IndexError("renoise requires 2 <= t <= T, got t = " + std::to_string(t));
  if (z.size() != x_prev.size()) throw ShapeError("renoise noise length mismatch");
  const double beta = sched.beta_at(t - 1);
  const double keep = std::sqrt(1.0 - beta);
  const double scale = std::sqrt(beta);
  Vector out(x_prev.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * x_prev[i] + scale * z[i];
  return out;
}

Vector renoise(std::span<const double> x_prev, std::size_t t, const NoiseSchedule& sched, Rng& rng) {
  if (t < 2 || t > sched.steps)
    throw IndexError("renoise requires 2 <= t <= T, got t = " + std::to_string(t));
  const Vector z = rng.gaussian_vector(x_prev.size());
  return renoise(x_prev, t, sched, z);
}

std::vector<Vector> repaint_sample(const DiffusionModel& model, const GuidanceNets& nets,
                                   std::span<const double> reference, const Mask& mask,
                                   const ConditionVector& condition, const RepaintConfig& cfg,
                                   std::size_t n, const ChainCallback& on_chain) {
  const std::size_t d = model.design_dim();
  if (reference.size() != d) throw ShapeError("reference length does not match the model");
  if (mask.size() != d) throw ShapeError("mask length does not match the model");
  if (cfg.resample < 1) throw ConfigError("resample count U must be >= 1");
  check_guidance(nets, cfg.guidance);
  const Vector cond = model.encode_condition(condition);
  const Vector ref_norm = model.design_stats.normalize(reference);
  const auto& sched = model.schedule;

  std::vector<Vector> out(n);
  parallel_for(n, [&](std::size_t chain) {
    Rng gen(cfg.seed, chain, StreamTag::kGeneration);
    Rng resample(cfg.seed, chain, StreamTag::kResample);
    Vector x = gen.gaussian_vector(d);
    for (std::size_t t = sched.steps; t >= 1; --t) {
      Vector x_prev;
      // At t = 1 no noise is drawn, so every resampling pass would repeat the first.
      const std::size_t passes = t > 1 ? cfg.resample : 1;
      for (std::size_t u = 1; u <= passes; ++u) {
        const Vector known = align_known(ref_norm, t, sched, resample, cfg.alignment);
        const Vector generated = guided_step(model, nets, x, t, cond, cfg.guidance, gen);
        x_prev = splice(generated, known, mask);
        if (!std::all_of(x_prev.begin(), x_prev.end(), [](double v) { return std::isfinite(v); }))
          throw SamplingError("non-finite state at step " + std::to_string(t), t);
        if (u < passes && t > 1) x = renoise(x_prev, t, sched, resample);
      }
      x = std::move(x_prev);
    }
    Vector design = model.design_stats.denormalize(x);
    for (std::size_t i = 0; i < d; ++i)
      if (mask[i]) design[i] = reference[i];
    out[chain] = std::move(design);
    if (on_chain) on_chain();
  });
  return out;
}

}  // namespace tabdiff
