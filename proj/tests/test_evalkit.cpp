#include <doctest.h>

#include <cmath>
#include <set>

#include "support.hpp"
#include "tabdiff/error.hpp"
#include "tabdiff/evalkit.hpp"
#include "tabdiff/rng.hpp"

using namespace tabdiff;

namespace {

double brute_mmd2(const std::vector<Vector>& a, const std::vector<Vector>& b, double sigma) {
  auto k = [&](const Vector& x, const Vector& y) {
    double d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
    return std::exp(-d / (2 * sigma * sigma));
  };
  double aa = 0, bb = 0, ab = 0;
  for (const auto& x : a)
    for (const auto& y : a) aa += k(x, y);
  for (const auto& x : b)
    for (const auto& y : b) bb += k(x, y);
  for (const auto& x : a)
    for (const auto& y : b) ab += k(x, y);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  return aa / (na * na) + bb / (nb * nb) - 2 * ab / (na * nb);
}

// F(d1, d2) density integrated with composite Simpson after x = u^2, which removes
// the x^{-1/2} singularity at the origin for d1 = 1.
double f_cdf_quadrature(double x, double d1, double d2) {
  const double logb = std::lgamma(d1 / 2) + std::lgamma(d2 / 2) - std::lgamma((d1 + d2) / 2);
  auto pdf = [&](double v) {
    if (v <= 0) return 0.0;
    return std::exp(0.5 * (d1 * std::log(d1 * v) + d2 * std::log(d2) - (d1 + d2) * std::log(d1 * v + d2)) -
                    std::log(v) - logb);
  };
  const int n = 20000;
  const double ub = std::sqrt(x), h = ub / n;
  double s = 0;
  for (int i = 0; i <= n; ++i) {
    const double u = i * h;
    // Limit at u = 0 is 2 / (sqrt(d2) B) for d1 = 1 and 0 for d1 > 1.
    const double g = u == 0 ? (d1 == 1 ? 2 * std::exp(-0.5 * std::log(d2) - logb) : 0.0) : pdf(u * u) * 2 * u;
    s += g * (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2));
  }
  return s * h / 3;
}

DoeTable table_from(const DoePlan& plan, const std::function<double(const std::vector<double>&, std::size_t)>& f) {
  return doe_run(plan, [&](const std::vector<double>& s, std::size_t rep, std::uint64_t) { return f(s, rep); });
}

}  // namespace

TEST_CASE("MAPE") {
  CHECK(mape(std::vector<double>{0.9, 1.1}, 1.0) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(mape(std::vector<double>{-2.0}, -1.0) == doctest::Approx(100.0).epsilon(1e-14));
  CHECK(mape(std::vector<double>{5.0, 5.0}, 5.0) == 0.0);
  CHECK_THROWS_AS(mape(std::vector<double>{1.0}, 0.0), MetricError);
  CHECK_THROWS_AS(mape(std::vector<double>{}, 1.0), MetricError);
}

TEST_CASE("MMD hand value and brute-force agreement") {
  // One point each at distance 2 with sigma 1: sqrt(2 - 2 exp(-2)).
  const MmdResult hand = mmd_rbf({{0.0}}, {{2.0}}, 1.0);
  CHECK(hand.value == doctest::Approx(1.31503971).epsilon(1e-8));
  CHECK(hand.value == doctest::Approx(std::sqrt(2 - 2 * std::exp(-2.0))).epsilon(1e-14));

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dim = 1 + trial % 4;
    std::vector<Vector> a, b;
    for (int i = 0; i < 15 + trial; ++i) a.push_back(rng.gaussian_vector(dim));
    for (int i = 0; i < 10 + 2 * trial; ++i) {
      Vector v = rng.gaussian_vector(dim);
      v[0] += 0.5;
      b.push_back(v);
    }
    const MmdResult r = mmd_rbf(a, b);
    CHECK(std::abs(r.value * r.value - brute_mmd2(a, b, r.bandwidth)) < 1e-12);
    const MmdResult swapped = mmd_rbf(b, a);
    CHECK(swapped.value == r.value);
    CHECK(swapped.bandwidth == r.bandwidth);
    CHECK(mmd_rbf(a, a).value == 0.0);
  }
}

TEST_CASE("MMD bandwidth and errors") {
  // Pairwise distances of {0, 1, 3}: 1, 2, 3, median 2.
  CHECK(median_pairwise_distance({{0.0}, {1.0}, {3.0}}) == 2.0);
  CHECK(mmd_rbf({{0.0}}, {{1.0}, {3.0}}).bandwidth == 2.0);
  CHECK_THROWS_AS(mmd_rbf({}, {{1.0}}), MetricError);
  CHECK_THROWS_AS(mmd_rbf({{1.0}}, {{1.0}}), MetricError);
  CHECK_THROWS_AS(mmd_rbf({{1.0}}, {{1.0, 2.0}}), ShapeError);
  CHECK_THROWS_AS(mmd_rbf({{1.0}}, {{2.0}}, 0.0), MetricError);
}

TEST_CASE("PRD from histograms") {
  const std::vector<double> same{0.25, 0.25, 0.5};
  const PrdCurve id = prd_from_histograms(same, same);
  double best_p = 0, best_r = 0;
  for (const auto& pt : id.points) {
    CHECK(pt.precision <= 1.0 + 1e-12);
    CHECK(pt.recall <= 1.0 + 1e-12);
    best_p = std::max(best_p, pt.precision);
    best_r = std::max(best_r, pt.recall);
  }
  CHECK(best_p == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(best_r == doctest::Approx(1.0).epsilon(1e-9));
  const auto [f8, f18] = prd_f_beta(id);
  CHECK(f8 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(f18 == doctest::Approx(1.0).epsilon(1e-6));

  const PrdCurve disjoint = prd_from_histograms(std::vector<double>{1, 0}, std::vector<double>{0, 1});
  for (const auto& pt : disjoint.points) {
    CHECK(pt.precision == 0.0);
    CHECK(pt.recall == 0.0);
  }

  // Generated mass sits inside half the real support: precision 1, recall 1/2.
  const PrdCurve half = prd_from_histograms(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0});
  best_p = best_r = 0;
  for (const auto& pt : half.points) {
    best_p = std::max(best_p, pt.precision);
    best_r = std::max(best_r, pt.recall);
    // Closed form: alpha = min(lambda / 2, 1), beta = alpha / lambda.
    CHECK(pt.precision == doctest::Approx(std::min(pt.lambda / 2, 1.0)).epsilon(1e-12));
  }
  CHECK(best_p == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(best_r == doctest::Approx(0.5).epsilon(1e-6));
  for (std::size_t i = 1; i < half.points.size(); ++i) CHECK(half.points[i].lambda > half.points[i - 1].lambda);

  CHECK_THROWS_AS(prd_from_histograms(std::vector<double>{1}, std::vector<double>{0.5, 0.5}), ShapeError);
}

TEST_CASE("k-means and clustered PRD") {
  Rng rng(9);
  std::vector<Vector> pts;
  for (int i = 0; i < 60; ++i) pts.push_back({(i % 2 ? 10.0 : -10.0) + 0.1 * rng.gaussian(), 0.1 * rng.gaussian()});
  const KMeansResult km = kmeans(pts, 2, 1);
  for (int i = 2; i < 60; ++i) CHECK(km.labels[i] == km.labels[i % 2]);
  CHECK(km.labels[0] != km.labels[1]);
  CHECK_THROWS_AS(kmeans(pts, 61, 1), ConfigError);

  std::vector<Vector> left;
  for (int i = 0; i < 60; i += 2) left.push_back(pts[i]);
  const PrdCurve c = prd(pts, left, 2, 201, 3);
  double best_p = 0, best_r = 0;
  for (const auto& pt : c.points) {
    best_p = std::max(best_p, pt.precision);
    best_r = std::max(best_r, pt.recall);
  }
  CHECK(best_p == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(best_r == doctest::Approx(0.5).epsilon(1e-6));
  const std::string csv = prd_to_csv(c);
  CHECK(csv.rfind("precision,recall\n", 0) == 0);
}

TEST_CASE("stability summary") {
  const std::vector<double> vals{4.0, 6.0};
  const StabilitySummary s = stability_run(
      [&](std::uint64_t, std::size_t i) { return StabilityRun{vals[i], i == 0 ? 1.0 : 0.5}; }, 2, 7);
  CHECK(s.mean_mape == 5.0);
  CHECK(s.std_mape == 1.0);
  CHECK(s.mean_feasibility == 0.75);
  CHECK(s.std_feasibility == 0.25);

  const StabilitySummary flat = stability_run([](std::uint64_t, std::size_t) { return StabilityRun{3.0, 1.0}; }, 5, 7);
  CHECK(flat.std_mape == 0.0);

  std::set<std::uint64_t> seeds;
  stability_run([&](std::uint64_t seed, std::size_t) { seeds.insert(seed); return StabilityRun{}; }, 8, 1);
  CHECK(seeds.size() == 8);

  CHECK_THROWS_AS(stability_run([](std::uint64_t, std::size_t) { return StabilityRun{}; }, 1, 0), ConfigError);
  try {
    stability_run([](std::uint64_t, std::size_t i) {
      if (i == 2) throw SamplingError("diverged", 3);
      return StabilityRun{};
    }, 4, 0);
    FAIL("expected an abort");
  } catch (const StabilityAborted& e) {
    CHECK(e.completed() == 2);
  }
}

TEST_CASE("correlation") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{3, 5, 7, 9, 11};
  const Correlation c = pearson(x, y);
  CHECK(c.defined);
  CHECK(c.r == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(c.p < 1e-6);
  CHECK(pearson(x, std::vector<double>{11, 9, 7, 5, 3}).r == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK_FALSE(pearson(x, std::vector<double>(5, 2.0)).defined);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), MetricError);

  // Independent columns: the false-positive rate at p < 0.05 should sit near 5%.
  Rng rng(12);
  int hits = 0;
  const int trials = 400;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> a(40), b(40);
    for (int i = 0; i < 40; ++i) {
      a[i] = rng.gaussian();
      b[i] = rng.gaussian();
    }
    if (pearson(a, b).p < 0.05) ++hits;
  }
  MESSAGE("false positive rate " << static_cast<double>(hits) / trials);
  CHECK(hits >= 8);   // 2%
  CHECK(hits <= 36);  // 9%

  // t = 2.228 with 10 df is the two-sided 5% point.
  CHECK(student_t_two_sided_p(2.228138851986, 10) == doctest::Approx(0.05).epsilon(1e-6));

  const auto scan = correlation_scan({{1, 5, 0}, {2, 5, 1}, {3, 5, 0}, {4, 5, 1}}, std::vector<double>{2, 4, 6, 8});
  CHECK(scan[0].r == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_FALSE(scan[1].defined);
  CHECK(scan[2].defined);
}

TEST_CASE("frequency analysis") {
  const FrequencyResult f = frequency_analysis(std::vector<double>{0.1, 0.1, 0.6, -5.0, 9.0}, 0, 1, 2);
  CHECK(f.histogram == std::vector<std::size_t>{3, 2});
  CHECK(f.highest_bin == 0);
  CHECK(f.lowest_bin == 1);
  CHECK(f.highest_midpoint == 0.25);
  CHECK(f.lowest_midpoint == 0.75);

  const FrequencyResult tie = frequency_analysis(std::vector<double>{0.1, 0.6}, 0, 1, 2);
  CHECK(tie.highest_bin == 0);
  CHECK(tie.lowest_bin == 0);
  CHECK(frequency_analysis(std::vector<double>{1.0}, 0, 1, 4).histogram.back() == 1);
  CHECK_THROWS_AS(frequency_analysis(std::vector<double>{1.0}, 1, 1), ConfigError);
}

TEST_CASE("DOE table layout and execution order") {
  const DoePlan plan = DoePlan::standard(2, 5);
  CHECK(plan.runs() == 16);
  const DoeTable t = doe_run(plan, [](const std::vector<double>& s, std::size_t, std::uint64_t) { return 10 * s[1]; });
  REQUIRE(t.rows.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) {
    const DoeRow& r = t.rows[i];
    CHECK(r.run == i);
    CHECK(r.replicate == i % 2);
    CHECK(r.response == 10 * r.settings[1]);
    // Standard order: last factor fastest.
    const std::size_t cell = i / 2;
    CHECK(r.settings == std::vector<double>{cell & 4 ? 0.7 : 0.3, cell & 2 ? 0.7 : 0.3, cell & 1 ? 30.0 : 20.0});
  }

  std::vector<std::size_t> order;
  doe_run(plan, [&](const std::vector<double>&, std::size_t, std::uint64_t seed) {
    for (const auto& r : t.rows)
      if (r.seed == seed) order.push_back(r.run);
    return 0.0;
  });
  CHECK(order == plan.run_order());
  std::vector<std::size_t> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 16; ++i) CHECK(sorted[i] == i);
  CHECK(plan.run_order() == DoePlan::standard(2, 5).run_order());

  const DoeTable bad = doe_run(plan, [](const std::vector<double>& s, std::size_t, std::uint64_t) -> double {
    if (s[2] == 30.0) throw SamplingError("diverged", 1);
    return 1.0;
  });
  std::size_t failed = 0;
  for (const auto& r : bad.rows)
    if (!r.ok) {
      ++failed;
      CHECK(r.error.find("diverged") != std::string::npos);
    }
  CHECK(failed == 8);
  CHECK_THROWS_AS(anova3(bad), DesignError);
}

TEST_CASE("ANOVA on exact effects") {
  const DoePlan plan = DoePlan::standard(2, 0);
  // Response depends only on gamma with zero noise: 3 or 7 around a mean of 5.
  const AnovaTable a = anova3(table_from(plan, [](const std::vector<double>& s, std::size_t) { return 10 * s[1]; }));
  CHECK(a.at("gamma").ss == doctest::Approx(16 * 4.0).epsilon(1e-12));
  CHECK(std::isinf(a.at("gamma").f));
  CHECK(a.at("gamma").significant);
  CHECK(a.at("gamma").flag == "infinite F (zero error variance)");
  CHECK(a.at("lambda").flag == "no variance");
  CHECK(a.at("lambda").p == 1.0);
  CHECK_FALSE(a.at("lambda:U").significant);
  CHECK(a.at("lambda:gamma:U").interaction);
  CHECK(a.at("error").df == 8);
  CHECK(a.at("total").df == 15);
  CHECK_THROWS_AS(a.at("nope"), IndexError);

  // +-1 by gamma level: every one of the 16 runs contributes exactly 1.
  const AnovaTable unit = anova3(table_from(plan, [](const std::vector<double>& s, std::size_t) {
    return s[1] > 0.5 ? 1.0 : -1.0;
  }));
  CHECK(unit.at("gamma").ss == 16.0);
  CHECK(unit.at("total").ss == 16.0);

  const AnovaTable flat = anova3(table_from(plan, [](const std::vector<double>&, std::size_t) { return 2.0; }));
  for (const auto& r : flat.rows)
    if (r.source != "error" && r.source != "total") CHECK(r.flag == "no variance");
}

TEST_CASE("ANOVA partition identity and two-level effects") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    DoePlan plan = DoePlan::standard(2 + trial % 3, trial);
    const DoeTable t = table_from(plan, [&](const std::vector<double>& s, std::size_t) {
      return s[0] * 3 + s[1] * s[2] * 0.1 + rng.gaussian();
    });
    const AnovaTable a = anova3(t);
    double parts = 0;
    for (const auto& r : a.rows)
      if (r.source != "total") parts += r.ss;
    CHECK(std::abs(parts - a.at("total").ss) < 1e-9 * std::max(1.0, a.at("total").ss));

    // Two-level main effect: SS = N (mean_hi - mean_lo)^2 / 4.
    for (std::size_t f = 0; f < 3; ++f) {
      double hi = 0, lo = 0;
      for (const auto& r : t.rows) (r.level_index[f] ? hi : lo) += r.response;
      const double n = static_cast<double>(t.rows.size());
      const double diff = hi / (n / 2) - lo / (n / 2);
      CHECK(a.at(plan.factors[f].name).ss == doctest::Approx(n * diff * diff / 4).epsilon(1e-10));
    }
    for (const auto& r : a.rows) {
      if (r.source == "error" || r.source == "total") continue;
      CHECK(r.p == doctest::Approx(1 - f_cdf(r.f, r.df, a.at("error").df)).epsilon(1e-9));
    }
  }

  DoePlan single = DoePlan::standard(1, 0);
  CHECK_THROWS_AS(anova3(table_from(single, [](const std::vector<double>&, std::size_t) { return 1.0; })), DesignError);
}

TEST_CASE("F distribution CDF") {
  CHECK(f_cdf(4.9646, 1, 10) == doctest::Approx(0.95).epsilon(1e-4));
  for (double x : {0.1, 0.5, 1.0, 2.5, 4.96, 12.0}) {
    CHECK(f_cdf(x, 1, 10) == doctest::Approx(f_cdf_quadrature(x, 1, 10)).epsilon(1e-7));
    CHECK(f_cdf(x, 3, 8) == doctest::Approx(f_cdf_quadrature(x, 3, 8)).epsilon(1e-7));
  }
  CHECK(f_cdf(0.0, 2, 2) == 0.0);
  CHECK_THROWS_AS(f_cdf(1.0, 0, 2), MetricError);
}
