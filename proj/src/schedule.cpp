#include "tabdiff/schedule.hpp"

#include <cmath>
#include <string>

#include "tabdiff/error.hpp"

namespace tabdiff {

namespace {

void check_t(const NoiseSchedule& s, std::size_t t) {
  if (t < 1 || t > s.steps)
    throw IndexError("timestep " + std::to_string(t) + " outside 1.." + std::to_string(s.steps));
}

}  // namespace

double NoiseSchedule::beta_at(std::size_t t) const {
  check_t(*this, t);
  return beta[t - 1];
}

double NoiseSchedule::alpha_at(std::size_t t) const {
  check_t(*this, t);
  return alpha[t - 1];
}

double NoiseSchedule::alpha_bar_at(std::size_t t) const {
  if (t == 0) return 1.0;
  check_t(*this, t);
  return alpha_bar[t - 1];
}

double NoiseSchedule::sigma_at(std::size_t t) const {
  check_t(*this, t);
  return sigma[t - 1];
}

NoiseSchedule build_schedule(std::size_t steps, double beta_min, double beta_max,
                             ScheduleKind kind) {
  if (kind != ScheduleKind::Linear) throw ConfigError("unsupported schedule kind");
  if (steps < 1) throw ConfigError("schedule needs at least one step");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw ConfigError("schedule needs 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  s.sigma.resize(steps);
  double running = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    s.beta[i] = beta_min + (beta_max - beta_min) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    running *= s.alpha[i];
    s.alpha_bar[i] = running;
    s.sigma[i] = std::sqrt(s.beta[i]);
  }
  return s;
}

NoiseSchedule default_schedule(std::size_t steps) {
  if (steps < 1) throw ConfigError("schedule needs at least one step");
  const double beta_min = 1e-4;
  const double beta_max = steps == 1 ? 0.5 : 20.0 / static_cast<double>(steps) - beta_min;
  if (beta_max >= 1.0) throw ConfigError("default schedule needs more steps");
  return build_schedule(steps, beta_min, std::max(beta_min, beta_max));
}

std::vector<double> q_sample(std::span<const double> x0, double alpha_bar,
                             std::span<const double> eps) {
  if (x0.size() != eps.size()) throw ShapeError("q_sample: noise and data lengths differ");
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

std::vector<double> q_sample(std::span<const double> x0, std::size_t t,
                             std::span<const double> eps, const NoiseSchedule& sched) {
  check_t(sched, t);
  return q_sample(x0, sched.alpha_bar_at(t), eps);
}

}  // namespace tabdiff
