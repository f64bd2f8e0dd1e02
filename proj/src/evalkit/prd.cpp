#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tabdiff/designs.hpp"
#include "tabdiff/evalkit.hpp"
#include "tabdiff/rng.hpp"

namespace tabdiff {

namespace {

double sqdist(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

KMeansResult lloyd(const std::vector<Vector>& pts, std::size_t k, Rng& rng, std::size_t max_iter) {
  const std::size_t n = pts.size();
  const std::size_t dim = pts.front().size();
  KMeansResult r;

  // k-means++ seeding
  r.centers.push_back(pts[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n) - 1))]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sqdist(pts[i], r.centers[0]);
  while (r.centers.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n) - 1));
    } else {
      double u = rng.uniform() * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        u -= d2[pick];
        if (u < 0.0) break;
      }
    }
    r.centers.push_back(pts[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sqdist(pts[i], r.centers.back()));
  }

  r.labels.assign(n, 0);
  bool first = true;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = first;
    first = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sqdist(pts[i], r.centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (best != r.labels[i]) changed = true;
      r.labels[i] = best;
    }
    if (!changed) break;

    std::vector<Vector> sums(k, Vector(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[r.labels[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[r.labels[i]][j] += pts[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // empty cluster: move it to the point farthest from its center
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sqdist(pts[i], r.centers[r.labels[i]]);
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        r.centers[c] = pts[far];
        r.labels[far] = c;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) r.centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }

  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) r.inertia += sqdist(pts[i], r.centers[r.labels[i]]);
  return r;
}

}  // namespace

KMeansResult kmeans(const std::vector<Vector>& points, std::size_t k, std::uint64_t seed,
                    std::size_t restarts, std::size_t max_iter) {
  if (k == 0) throw ConfigError("k-means needs k >= 1");
  if (points.size() < k) throw ConfigError("k-means needs at least k points");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw ShapeError("k-means points have mismatched dimensions");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    Rng rng(seed, r, StreamTag::kShuffle);
    KMeansResult cur = lloyd(points, k, rng, max_iter);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

PrdCurve prd_from_histograms(std::span<const double> p, std::span<const double> q,
                             std::size_t grid_size, double eps) {
  if (p.size() != q.size() || p.empty()) throw ShapeError("PRD histograms must have equal nonzero length");
  if (grid_size < 2) throw ConfigError("PRD grid needs at least two angles");
  PrdCurve curve;
  curve.clusters = p.size();
  const double lo = eps;
  const double hi = std::numbers::pi / 2.0 - eps;
  curve.points.reserve(grid_size);
  for (std::size_t g = 0; g < grid_size; ++g) {
    const double theta = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_size - 1);
    const double lambda = std::tan(theta);
    double alpha = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) alpha += std::min(lambda * p[i], q[i]);
    curve.points.push_back({lambda, alpha, alpha / lambda});
  }
  return curve;
}

PrdCurve prd(const std::vector<Vector>& real, const std::vector<Vector>& generated, std::size_t k,
             std::size_t grid_size, std::uint64_t seed, std::size_t restarts) {
  if (real.size() < k || generated.size() < k)
    throw ConfigError("PRD needs at least k points in each set (k = " + std::to_string(k) + ")");
  std::vector<Vector> pooled = real;
  pooled.insert(pooled.end(), generated.begin(), generated.end());
  const KMeansResult km = kmeans(pooled, k, seed, restarts);
  std::vector<double> p(k, 0.0), q(k, 0.0);
  for (std::size_t i = 0; i < real.size(); ++i) p[km.labels[i]] += 1.0;
  for (std::size_t i = 0; i < generated.size(); ++i) q[km.labels[real.size() + i]] += 1.0;
  for (auto& v : p) v /= static_cast<double>(real.size());
  for (auto& v : q) v /= static_cast<double>(generated.size());
  return prd_from_histograms(p, q, grid_size);
}

std::pair<double, double> prd_f_beta(const PrdCurve& curve, double beta) {
  auto f = [](double prec, double rec, double b) {
    const double b2 = b * b;
    const double den = b2 * prec + rec;
    return den > 0.0 ? (1.0 + b2) * prec * rec / den : 0.0;
  };
  double fb = 0.0, finv = 0.0;
  for (const auto& pt : curve.points) {
    fb = std::max(fb, f(pt.precision, pt.recall, beta));
    finv = std::max(finv, f(pt.precision, pt.recall, 1.0 / beta));
  }
  return {fb, finv};
}

std::string prd_to_csv(const PrdCurve& curve) {
  std::string out = "precision,recall\n";
  for (const auto& p : curve.points) out += format_double(p.precision) + "," + format_double(p.recall) + "\n";
  return out;
}

nlohmann::json to_json(const PrdCurve& c) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points) pts.push_back({{"lambda", p.lambda}, {"precision", p.precision}, {"recall", p.recall}});
  const auto [f8, f18] = prd_f_beta(c);
  return {{"clusters", c.clusters}, {"f_8", f8}, {"f_1_8", f18}, {"points", pts}};
}

}  // namespace tabdiff
