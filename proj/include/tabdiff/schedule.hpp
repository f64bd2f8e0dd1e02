#pragma once

#include <span>
#include <vector>

namespace tabdiff {

enum class ScheduleKind { Linear };

/// Variance schedule for t = 1..T. Vectors are stored 0-based (index t-1); use the
/// accessors with the 1-based timestep.
struct NoiseSchedule {
  std::size_t steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;

  double beta_at(std::size_t t) const;
  double alpha_at(std::size_t t) const;
  /// alpha_bar_at(0) == 1.
  double alpha_bar_at(std::size_t t) const;
  double sigma_at(std::size_t t) const;
};

/// Linear betas from beta_min to beta_max, sigma_t = sqrt(beta_t).
NoiseSchedule build_schedule(std::size_t steps, double beta_min, double beta_max,
                             ScheduleKind kind = ScheduleKind::Linear);

/// Linear schedule whose betas sum to 10, so alpha_bar_T ~ exp(-10).
NoiseSchedule default_schedule(std::size_t steps = 200);

/// sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps.
std::vector<double> q_sample(std::span<const double> x0, double alpha_bar,
                             std::span<const double> eps);
std::vector<double> q_sample(std::span<const double> x0, std::size_t t,
                             std::span<const double> eps, const NoiseSchedule& sched);

}  // namespace tabdiff
