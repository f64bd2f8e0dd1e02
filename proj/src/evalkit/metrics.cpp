#include <algorithm>
#include <cmath>

#include "tabdiff/evalkit.hpp"

namespace tabdiff {

namespace {

double squared_distance(const Vector& x, const Vector& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

/// Mean kernel value over X x Y, summed in ascending order so the result only
/// depends on the multiset of kernel values.
double mean_kernel(const std::vector<Vector>& x, const std::vector<Vector>& y, double inv_two_sigma2) {
  std::vector<double> values;
  values.reserve(x.size() * y.size());
  for (const auto& a : x)
    for (const auto& b : y) values.push_back(std::exp(-squared_distance(a, b) * inv_two_sigma2));
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
}

}  // namespace

double mape(std::span<const double> values, double target) {
  if (target == 0.0 || !std::isfinite(target)) throw MetricError("MAPE is undefined for a zero target");
  if (values.empty()) throw MetricError("MAPE needs at least one value");
  double s = 0.0;
  for (double v : values) s += std::abs(v - target) / std::abs(target);
  return 100.0 * s / static_cast<double>(values.size());
}

double median_pairwise_distance(const std::vector<Vector>& points) {
  std::vector<double> d;
  d.reserve(points.size() * (points.size() - 1) / 2);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) d.push_back(std::sqrt(squared_distance(points[i], points[j])));
  if (d.empty()) return 0.0;
  std::sort(d.begin(), d.end());
  const std::size_t m = d.size() / 2;
  return d.size() % 2 ? d[m] : 0.5 * (d[m - 1] + d[m]);
}

MmdResult mmd_rbf(const std::vector<Vector>& a, const std::vector<Vector>& b,
                  std::optional<double> bandwidth) {
  if (a.empty() || b.empty()) throw MetricError("MMD needs two nonempty sets");
  const std::size_t dim = a.front().size();
  for (const auto* set : {&a, &b})
    for (const auto& v : *set)
      if (v.size() != dim) throw ShapeError("MMD sets have mismatched dimensions");

  double sigma = 0.0;
  if (bandwidth) {
    sigma = *bandwidth;
    if (!(sigma > 0.0)) throw MetricError("MMD bandwidth must be positive");
  } else {
    std::vector<Vector> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    sigma = median_pairwise_distance(pooled);
    if (!(sigma > 0.0)) throw MetricError("MMD bandwidth is zero: all pooled points are identical");
  }
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const double kaa = mean_kernel(a, a, inv);
  const double kbb = mean_kernel(b, b, inv);
  const double kab = mean_kernel(a, b, inv);
  const double mmd2 = kaa + kbb - 2.0 * kab;
  return MmdResult{std::sqrt(std::max(mmd2, 0.0)), sigma, a.size(), b.size()};
}

nlohmann::json to_json(const MmdResult& r) {
  return {{"mmd", r.value}, {"bandwidth", r.bandwidth}, {"n_a", r.n_a}, {"n_b", r.n_b}};
}

}  // namespace tabdiff
