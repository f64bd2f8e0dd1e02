#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tabdiff/normalizer.hpp"

namespace tabdiff {

using Vector = std::vector<double>;

/// Ordered parameter names with per-parameter [lo, hi] bounds.
struct DesignSchema {
  std::string name;
  std::vector<std::string> names;
  std::vector<std::pair<double, double>> bounds;
  /// Environmental condition columns expected next to `perf` in tabular files.
  std::vector<std::string> environment;
  /// "tabular" or "airfoil"; airfoil vectors are [upper y | lower y] at cosine stations.
  std::string kind = "tabular";

  std::size_t dim() const { return names.size(); }
  /// Throws DataError if names repeat, lo >= hi, or sizes disagree.
  void validate() const;
  bool in_bounds(std::span<const double> x) const;

  static DesignSchema uniform(std::string name, std::size_t dim, double lo, double hi);
  nlohmann::json to_json() const;
  static DesignSchema from_json(const nlohmann::json& j);
  static DesignSchema load(const std::filesystem::path& path);
};

/// Generation condition: the performance target plus named environmental scalars.
struct ConditionVector {
  double performance_target = 0.0;
  std::vector<std::pair<std::string, double>> environment;

  /// [performance, env values in `order`]. Throws ConfigError for a missing or
  /// unknown name, or a non-finite entry.
  Vector to_vector(const std::vector<std::string>& order) const;
};

struct TabularDataset {
  DesignSchema schema;
  std::vector<Vector> designs;
  std::vector<double> performance;
  /// Per-row environmental values in schema.environment order.
  std::vector<Vector> environment;
  /// Empty when the file had no `feasible` column.
  std::vector<int> feasible;
  /// 0-based data-row indices whose values fall outside the schema bounds.
  std::vector<std::size_t> out_of_bounds_rows;

  std::size_t size() const { return designs.size(); }
  bool has_feasibility() const { return !feasible.empty(); }
  /// [perf, env...] per row.
  std::vector<Vector> conditions() const;
};

/// Reads a CSV whose header is the schema names, `perf`, the schema's environment
/// columns and an optional `feasible` column (any order). Decimal point, no locale.
/// Throws IngestError with the 1-based line number on malformed content.
TabularDataset load_tabular(const std::filesystem::path& path, const DesignSchema& schema);
TabularDataset parse_tabular(const std::string& text, const DesignSchema& schema);
void write_tabular(const std::filesystem::path& path, const TabularDataset& data);

/// Writes designs with the schema header plus optional extra named columns.
void write_designs_csv(const std::filesystem::path& path, const DesignSchema& schema,
                       const std::vector<Vector>& designs,
                       const std::vector<std::pair<std::string, std::vector<double>>>& extra = {});
/// Reads rows written by write_designs_csv (extra columns are ignored).
std::vector<Vector> read_designs_csv(const std::filesystem::path& path, const DesignSchema& schema);
/// Reads every numeric column of a CSV as rows; used by the evaluation commands.
std::pair<std::vector<std::string>, std::vector<Vector>> read_numeric_csv(
    const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);
double parse_double(std::string_view text);

struct FeasibilityReport {
  bool feasible = true;
  std::vector<std::string> violations;
};

/// Seam for problem-specific feasibility rules. Implementations are pure.
class FeasibilityOracle {
 public:
  virtual ~FeasibilityOracle() = default;
  virtual FeasibilityReport check(std::span<const double> design) const = 0;
};

/// Feasible iff every coordinate lies inside the schema bounds.
class BoundsOracle final : public FeasibilityOracle {
 public:
  explicit BoundsOracle(DesignSchema schema) : schema_(std::move(schema)) {}
  FeasibilityReport check(std::span<const double> design) const override;

 private:
  DesignSchema schema_;
};

/// Desk-scale stand-in for a real design problem: 16 parameters in [0, 1],
///   f(x) = 0.05 + 0.3 x1^2 + 0.2 x2 x3 - 0.1 x4 + 0.05 * sum_{i>=5} x_i / 12
/// (1-based indices), feasible iff x1 + x2 <= 1.2 and x3 >= 0.1.
class SyntheticProblem final : public FeasibilityOracle {
 public:
  static constexpr std::size_t kDim = 16;
  static constexpr const char* kName = "synthetic16";

  DesignSchema schema() const;
  double performance(std::span<const double> x) const;
  /// g_k(x) <= 0 means satisfied.
  std::vector<double> constraints(std::span<const double> x) const;
  FeasibilityReport check(std::span<const double> design) const override;
};

/// Rejection-samples `n` feasible designs uniformly in the box, labelled with
/// exact performance and feasible = 1. Throws DesignError when the acceptance
/// rate drops below 1e-3.
TabularDataset synth_generate(const SyntheticProblem& problem, std::size_t n, std::uint64_t seed);
/// Uniform box samples labelled with both classes; classifier training data.
TabularDataset synth_generate_mixed(const SyntheticProblem& problem, std::size_t n,
                                    std::uint64_t seed);

}  // namespace tabdiff
