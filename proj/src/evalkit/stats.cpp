#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/beta.hpp>

#include "tabdiff/evalkit.hpp"
#include "tabdiff/rng.hpp"

namespace tabdiff {

double f_cdf(double x, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw MetricError("F distribution needs positive degrees of freedom");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::ibeta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2));
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw MetricError("t distribution needs positive degrees of freedom");
  if (std::isinf(t)) return 0.0;
  return boost::math::ibeta(df / 2.0, 0.5, df / (df + t * t));
}

StabilitySummary stability_run(const StabilityGenerator& generator, std::size_t repeats,
                               std::uint64_t base_seed) {
  if (repeats < 2) throw ConfigError("stability run needs at least two repeats");
  StabilitySummary s;
  for (std::size_t i = 0; i < repeats; ++i) {
    try {
      s.runs.push_back(generator(derive_seed(base_seed, i, 0x57ab), i));
    } catch (const std::exception& e) {
      throw StabilityAborted("stability repeat " + std::to_string(i) + " failed after " +
                                 std::to_string(i) + " completed runs: " + e.what(),
                             i);
    }
  }
  const double n = static_cast<double>(repeats);
  for (const auto& r : s.runs) {
    s.mean_mape += r.mape / n;
    s.mean_feasibility += r.feasibility_rate / n;
  }
  for (const auto& r : s.runs) {
    s.std_mape += (r.mape - s.mean_mape) * (r.mape - s.mean_mape) / n;
    s.std_feasibility += (r.feasibility_rate - s.mean_feasibility) * (r.feasibility_rate - s.mean_feasibility) / n;
  }
  s.std_mape = std::sqrt(s.std_mape);
  s.std_feasibility = std::sqrt(s.std_feasibility);
  return s;
}

nlohmann::json to_json(const StabilitySummary& s) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : s.runs) runs.push_back({{"mape", r.mape}, {"feasibility_rate", r.feasibility_rate}});
  return {{"runs", runs},
          {"mean_mape", s.mean_mape},
          {"std_mape", s.std_mape},
          {"mean_feasibility", s.mean_feasibility},
          {"std_feasibility", s.std_feasibility}};
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("correlation inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw MetricError("correlation needs at least 3 samples");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  Correlation c;
  if (sxx <= 0.0 || syy <= 0.0) return c;  // constant column: undefined
  c.defined = true;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  const double one_minus = 1.0 - c.r * c.r;
  c.p = one_minus <= 0.0 ? 0.0 : student_t_two_sided_p(c.r * std::sqrt(df / one_minus), df);
  return c;
}

std::vector<Correlation> correlation_scan(const std::vector<Vector>& rows, std::span<const double> perf) {
  if (rows.size() != perf.size()) throw ShapeError("correlation scan: row count differs from performance count");
  if (rows.empty()) throw MetricError("correlation scan needs data");
  const std::size_t dim = rows.front().size();
  std::vector<Correlation> out;
  std::vector<double> col(rows.size());
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != dim) throw ShapeError("correlation scan rows have mismatched widths");
      col[i] = rows[i][j];
    }
    out.push_back(pearson(col, perf));
  }
  return out;
}

FrequencyResult frequency_analysis(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins == 0) throw ConfigError("frequency analysis needs at least one bin");
  if (!(hi > lo)) throw ConfigError("frequency analysis needs hi > lo");
  if (values.empty()) throw MetricError("frequency analysis needs data");
  FrequencyResult r;
  r.lo = lo;
  r.hi = hi;
  r.histogram.assign(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    const double pos = std::floor((v - lo) / width);
    const auto idx = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
    ++r.histogram[idx];
  }
  for (std::size_t b = 1; b < bins; ++b) {
    if (r.histogram[b] > r.histogram[r.highest_bin]) r.highest_bin = b;
    if (r.histogram[b] < r.histogram[r.lowest_bin]) r.lowest_bin = b;
  }
  r.highest_midpoint = lo + (static_cast<double>(r.highest_bin) + 0.5) * width;
  r.lowest_midpoint = lo + (static_cast<double>(r.lowest_bin) + 0.5) * width;
  return r;
}

}  // namespace tabdiff
