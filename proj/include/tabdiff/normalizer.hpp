#pragma once

#include <span>
#include <vector>

namespace tabdiff {

/// Per-column z-score statistics. Columns with zero spread keep std = 1.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;

  static Normalizer fit(const std::vector<std::vector<double>>& rows);
  static Normalizer identity(std::size_t dim);

  std::size_t dim() const { return mean.size(); }
  std::vector<double> normalize(std::span<const double> x) const;
  std::vector<double> denormalize(std::span<const double> z) const;
  std::vector<std::vector<double>> normalize_all(const std::vector<std::vector<double>>& rows) const;
};

}  // namespace tabdiff
