#pragma once

// Evaluation metrics: MAPE, RBF-kernel MMD, precision/recall for distributions,
// stability statistics, correlation and frequency scans, and the full-factorial
// DOE with its ANOVA decomposition.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabdiff/error.hpp"

namespace tabdiff {

using Vector = std::vector<double>;

/// mean(|v - target| / |target|) * 100. Throws MetricError for a zero target or no values.
double mape(std::span<const double> values, double target);

struct MmdResult {
  double value = 0.0;
  double bandwidth = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

/// Biased (V-statistic) MMD with k(x, y) = exp(-|x - y|^2 / (2 sigma^2)); sigma
/// defaults to the median pairwise distance of A u B. Returns sqrt(max(MMD^2, 0)).
/// Kernel sums are accumulated in sorted order, so swapping A and B gives the same bits.
MmdResult mmd_rbf(const std::vector<Vector>& a, const std::vector<Vector>& b,
                  std::optional<double> bandwidth = std::nullopt);
double median_pairwise_distance(const std::vector<Vector>& points);

struct KMeansResult {
  std::vector<Vector> centers;
  std::vector<std::size_t> labels;
  double inertia = 0.0;
};

/// k-means++ seeding and Lloyd iterations; best inertia over `restarts` runs.
KMeansResult kmeans(const std::vector<Vector>& points, std::size_t k, std::uint64_t seed,
                    std::size_t restarts = 10, std::size_t max_iter = 300);

struct PrdPoint {
  double lambda = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct PrdCurve {
  std::vector<PrdPoint> points;  // increasing lambda
  std::size_t clusters = 0;
};

/// alpha(lambda) = sum_i min(lambda p_i, q_i), beta = alpha / lambda, for
/// lambda = tan(theta), theta uniform on [eps, pi/2 - eps].
PrdCurve prd_from_histograms(std::span<const double> p, std::span<const double> q,
                             std::size_t grid_size = 1001, double eps = 1e-10);
/// Clusters the pooled set, then compares the real (p) and generated (q) histograms.
PrdCurve prd(const std::vector<Vector>& real, const std::vector<Vector>& generated,
             std::size_t k = 20, std::size_t grid_size = 1001, std::uint64_t seed = 0,
             std::size_t restarts = 10);
/// Max F_beta and F_{1/beta} over the curve.
std::pair<double, double> prd_f_beta(const PrdCurve& curve, double beta = 8.0);
/// Two-column "precision,recall" CSV.
std::string prd_to_csv(const PrdCurve& curve);

struct StabilityRun {
  double mape = 0.0;
  double feasibility_rate = 0.0;
};

struct StabilitySummary {
  std::vector<StabilityRun> runs;
  double mean_mape = 0.0;
  double std_mape = 0.0;  // population standard deviation
  double mean_feasibility = 0.0;
  double std_feasibility = 0.0;
};

class StabilityAborted : public Error {
 public:
  StabilityAborted(const std::string& what, std::size_t completed)
      : Error(what), completed_(completed) {}
  std::size_t completed() const { return completed_; }

 private:
  std::size_t completed_;
};

using StabilityGenerator = std::function<StabilityRun(std::uint64_t seed, std::size_t repeat)>;

/// Calls `generator` with seeds derived from base_seed for each repeat.
StabilitySummary stability_run(const StabilityGenerator& generator, std::size_t repeats,
                               std::uint64_t base_seed);

struct Correlation {
  double r = 0.0;
  double p = 1.0;
  bool defined = false;  // false for a constant column
};

Correlation pearson(std::span<const double> x, std::span<const double> y);
/// Pearson r of every column against `perf`, two-sided p from Student t with n-2 df.
std::vector<Correlation> correlation_scan(const std::vector<Vector>& rows,
                                          std::span<const double> perf);

struct FrequencyResult {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> histogram;
  std::size_t highest_bin = 0;
  std::size_t lowest_bin = 0;
  double highest_midpoint = 0.0;
  double lowest_midpoint = 0.0;
};

/// Equal-width bins over [lo, hi]; values outside are counted in the edge bins.
/// Ties go to the lowest bin index.
FrequencyResult frequency_analysis(std::span<const double> values, double lo, double hi,
                                   std::size_t bins = 20);

struct DoeFactor {
  std::string name;
  std::vector<double> levels;
};

struct DoePlan {
  std::vector<DoeFactor> factors;
  std::size_t replicates = 2;
  std::uint64_t seed = 0;

  /// lambda, gamma in {0.3, 0.7}; U in {20, 30}.
  static DoePlan standard(std::size_t replicates = 2, std::uint64_t seed = 0);
  std::size_t cells() const;
  std::size_t runs() const { return cells() * replicates; }
  /// Execution order: a seeded permutation of the standard-order run indices.
  std::vector<std::size_t> run_order() const;
};

struct DoeRow {
  std::size_t run = 0;
  std::vector<std::size_t> level_index;
  std::vector<double> settings;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  double response = 0.0;
  bool ok = true;
  std::string error;
};

struct DoeTable {
  std::vector<DoeFactor> factors;
  std::size_t replicates = 0;
  std::vector<DoeRow> rows;
};

using DoeExperiment =
    std::function<double(const std::vector<double>& settings, std::size_t replicate, std::uint64_t seed)>;

/// Every cell x replicate in standard order. A failing closure is recorded with
/// ok = false and the message instead of aborting the table.
DoeTable doe_run(const DoePlan& plan, const DoeExperiment& experiment);

struct AnovaRow {
  std::string source;
  double ss = 0.0;
  double df = 0.0;
  double ms = 0.0;
  double f = 0.0;
  double p = 1.0;
  bool significant = false;
  bool interaction = false;
  std::string flag;
};

struct AnovaTable {
  std::vector<AnovaRow> rows;
  double alpha = 0.05;
  const AnovaRow& at(const std::string& source) const;
};

/// Balanced factorial ANOVA: all main effects and interactions, error and total.
/// Throws DesignError for failed runs, missing cells or unequal replication.
AnovaTable anova3(const DoeTable& table, double alpha = 0.05);

/// CDF of the F(d1, d2) distribution.
double f_cdf(double x, double d1, double d2);
/// Two-sided p-value of a Student t statistic.
double student_t_two_sided_p(double t, double df);

nlohmann::json to_json(const MmdResult& r);
nlohmann::json to_json(const PrdCurve& c);
nlohmann::json to_json(const StabilitySummary& s);
nlohmann::json to_json(const AnovaTable& t);
nlohmann::json to_json(const DoeTable& t);

}  // namespace tabdiff
