#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

#include "tabdiff/evalkit.hpp"
#include "tabdiff/rng.hpp"

namespace tabdiff {

namespace {

/// Mixed-radix decomposition of a cell index, last factor fastest.
std::vector<std::size_t> cell_levels(std::size_t cell, const std::vector<std::size_t>& radix) {
  std::vector<std::size_t> idx(radix.size());
  for (std::size_t f = radix.size(); f-- > 0;) {
    idx[f] = cell % radix[f];
    cell /= radix[f];
  }
  return idx;
}

std::size_t subset_key(const std::vector<std::size_t>& levels, unsigned mask,
                       const std::vector<std::size_t>& radix) {
  std::size_t key = 0;
  for (std::size_t f = 0; f < radix.size(); ++f)
    if (mask & (1u << f)) key = key * radix[f] + levels[f];
  return key;
}

}  // namespace

DoePlan DoePlan::standard(std::size_t replicates, std::uint64_t seed) {
  DoePlan p;
  p.factors = {{"lambda", {0.3, 0.7}}, {"gamma", {0.3, 0.7}}, {"U", {20.0, 30.0}}};
  p.replicates = replicates;
  p.seed = seed;
  return p;
}

std::size_t DoePlan::cells() const {
  std::size_t c = 1;
  for (const auto& f : factors) c *= f.levels.size();
  return c;
}

std::vector<std::size_t> DoePlan::run_order() const {
  std::vector<std::size_t> order(runs());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, 0, StreamTag::kShuffle);
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

DoeTable doe_run(const DoePlan& plan, const DoeExperiment& experiment) {
  if (plan.factors.empty()) throw DesignError("DOE plan has no factors");
  for (const auto& f : plan.factors)
    if (f.levels.size() < 2) throw DesignError("DOE factor '" + f.name + "' needs at least two levels");
  if (plan.replicates == 0) throw DesignError("DOE plan needs at least one replicate");

  std::vector<std::size_t> radix;
  for (const auto& f : plan.factors) radix.push_back(f.levels.size());

  DoeTable table;
  table.factors = plan.factors;
  table.replicates = plan.replicates;
  table.rows.resize(plan.runs());
  for (std::size_t cell = 0; cell < plan.cells(); ++cell) {
    const auto lv = cell_levels(cell, radix);
    for (std::size_t r = 0; r < plan.replicates; ++r) {
      DoeRow& row = table.rows[cell * plan.replicates + r];
      row.run = cell * plan.replicates + r;
      row.level_index = lv;
      for (std::size_t f = 0; f < lv.size(); ++f) row.settings.push_back(plan.factors[f].levels[lv[f]]);
      row.replicate = r;
      row.seed = derive_seed(plan.seed, row.run, 0xd0e);
    }
  }
  for (std::size_t run : plan.run_order()) {
    DoeRow& row = table.rows[run];
    try {
      row.response = experiment(row.settings, row.replicate, row.seed);
      if (!std::isfinite(row.response)) {
        row.ok = false;
        row.error = "non-finite response";
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      row.response = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return table;
}

const AnovaRow& AnovaTable::at(const std::string& source) const {
  for (const auto& r : rows)
    if (r.source == source) return r;
  throw IndexError("no ANOVA source '" + source + "'");
}

AnovaTable anova3(const DoeTable& table, double alpha) {
  const std::size_t nf = table.factors.size();
  if (nf == 0 || nf > 8) throw DesignError("ANOVA supports 1 to 8 factors");
  std::vector<std::size_t> radix;
  std::size_t cells = 1;
  for (const auto& f : table.factors) {
    radix.push_back(f.levels.size());
    cells *= f.levels.size();
  }

  // group responses by cell
  std::vector<std::vector<double>> by_cell(cells);
  for (const auto& row : table.rows) {
    if (!row.ok) throw DesignError("ANOVA input contains failed run " + std::to_string(row.run) + ": " + row.error);
    if (row.level_index.size() != nf) throw DesignError("DOE row has the wrong number of factor levels");
    std::size_t cell = 0;
    for (std::size_t f = 0; f < nf; ++f) {
      if (row.level_index[f] >= radix[f]) throw DesignError("DOE row level index out of range");
      cell = cell * radix[f] + row.level_index[f];
    }
    by_cell[cell].push_back(row.response);
  }
  const std::size_t reps = by_cell.front().size();
  for (const auto& c : by_cell)
    if (c.size() != reps) throw DesignError("unbalanced design: every cell needs the same number of replicates");
  if (reps < 2) throw DesignError("ANOVA needs at least 2 replicates per cell for a nonzero error df");

  const double n_total = static_cast<double>(cells * reps);
  std::vector<double> cell_mean(cells);
  double grand = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    cell_mean[c] = std::accumulate(by_cell[c].begin(), by_cell[c].end(), 0.0) / static_cast<double>(reps);
    grand += cell_mean[c];
  }
  grand /= static_cast<double>(cells);

  // marginal means for every factor subset (mask 0 = grand mean)
  const unsigned n_masks = 1u << nf;
  std::vector<std::map<std::size_t, double>> marginal(n_masks);
  for (unsigned mask = 0; mask < n_masks; ++mask) {
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (std::size_t c = 0; c < cells; ++c) {
      auto& a = acc[subset_key(cell_levels(c, radix), mask, radix)];
      a.first += cell_mean[c];
      ++a.second;
    }
    for (const auto& [k, v] : acc) marginal[mask][k] = v.first / static_cast<double>(v.second);
  }

  AnovaTable out;
  out.alpha = alpha;
  std::vector<unsigned> masks;
  for (unsigned m = 1; m < n_masks; ++m) masks.push_back(m);
  std::stable_sort(masks.begin(), masks.end(),
                   [](unsigned a, unsigned b) { return std::popcount(a) < std::popcount(b); });

  for (unsigned mask : masks) {
    // effect(levels) = sum over sub-masks T of S of (-1)^{|S|-|T|} mean_T
    double ss = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      const auto lv = cell_levels(c, radix);
      double effect = 0.0;
      for (unsigned sub = mask;; sub = (sub - 1) & mask) {
        const double sign = (std::popcount(mask) - std::popcount(sub)) % 2 ? -1.0 : 1.0;
        effect += sign * marginal[sub].at(subset_key(lv, sub, radix));
        if (sub == 0) break;
      }
      ss += effect * effect;
    }
    ss *= static_cast<double>(reps);
    double df = 1.0;
    std::string name;
    for (std::size_t f = 0; f < nf; ++f) {
      if (!(mask & (1u << f))) continue;
      df *= static_cast<double>(radix[f] - 1);
      name += (name.empty() ? "" : ":") + table.factors[f].name;
    }
    AnovaRow row;
    row.source = name;
    row.ss = ss;
    row.df = df;
    row.ms = ss / df;
    row.interaction = std::popcount(mask) > 1;
    out.rows.push_back(row);
  }

  AnovaRow err;
  err.source = "error";
  AnovaRow total;
  total.source = "total";
  for (std::size_t c = 0; c < cells; ++c)
    for (double y : by_cell[c]) {
      err.ss += (y - cell_mean[c]) * (y - cell_mean[c]);
      total.ss += (y - grand) * (y - grand);
    }
  err.df = static_cast<double>(cells * (reps - 1));
  err.ms = err.ss / err.df;
  total.df = n_total - 1.0;
  total.ms = total.ss / total.df;

  // Error variance below rounding noise of the total is treated as exactly zero.
  const bool zero_error = err.ss <= 1e-14 * total.ss || err.ss == 0.0;
  for (auto& row : out.rows) {
    const bool zero_effect = row.ss <= 1e-14 * total.ss || row.ss == 0.0;
    if (zero_error) {
      if (zero_effect) {
        row.f = 0.0;
        row.p = 1.0;
        row.flag = "no variance";
      } else {
        row.f = std::numeric_limits<double>::infinity();
        row.p = 0.0;
        row.flag = "infinite F (zero error variance)";
      }
    } else {
      row.f = row.ms / err.ms;
      // upper tail directly, so tiny p-values keep their precision
      row.p = row.f > 0.0 ? boost::math::ibetac(row.df / 2.0, err.df / 2.0, row.df * row.f / (row.df * row.f + err.df))
                          : 1.0;
    }
    row.significant = row.p < alpha;
  }
  out.rows.push_back(err);
  out.rows.push_back(total);
  return out;
}

nlohmann::json to_json(const AnovaTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json j = {{"source", r.source}, {"ss", r.ss}, {"df", r.df}, {"ms", r.ms}};
    if (r.source != "error" && r.source != "total") {
      j["f"] = std::isinf(r.f) ? nlohmann::json("inf") : nlohmann::json(r.f);
      j["p"] = r.p;
      j["significant"] = r.significant;
      j["interaction"] = r.interaction;
      if (!r.flag.empty()) j["flag"] = r.flag;
    }
    rows.push_back(j);
  }
  return {{"alpha", t.alpha}, {"rows", rows}};
}

nlohmann::json to_json(const DoeTable& t) {
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& f : t.factors) factors.push_back({{"name", f.name}, {"levels", f.levels}});
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json j = {{"run", r.run}, {"settings", r.settings}, {"replicate", r.replicate},
                        {"seed", r.seed}, {"ok", r.ok}};
    j["response"] = r.ok ? nlohmann::json(r.response) : nlohmann::json(nullptr);
    if (!r.ok) j["error"] = r.error;
    rows.push_back(j);
  }
  return {{"factors", factors}, {"replicates", t.replicates}, {"rows", rows}};
}

}  // namespace tabdiff
