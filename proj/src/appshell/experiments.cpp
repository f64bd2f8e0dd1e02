#include "tabdiff/appshell/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tabdiff/appshell/generate.hpp"
#include "tabdiff/evalkit.hpp"

namespace tabdiff {

using nlohmann::json;
namespace fs = std::filesystem;

std::string ReportTable::to_csv() const {
  auto cell = [](const json& v) -> std::string {
    if (v.is_null()) return "";
    if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number()) return format_double(v.get<double>());
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s.find_first_of(",\"\n") == std::string::npos) return s;
      std::string q = "\"";
      for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      return q + "\"";
    }
    return v.dump();
  };
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + cell(r[i]);
    out += "\n";
  }
  return out;
}

json ReportTable::to_json() const {
  json rs = json::array();
  for (const auto& r : rows) {
    json o = json::object();
    for (std::size_t i = 0; i < columns.size(); ++i) o[columns[i]] = r[i];
    rs.push_back(o);
  }
  return {{"name", name}, {"columns", columns}, {"rows", rs}};
}

std::size_t ReportTable::column(const std::string& c) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == c) return i;
  throw IndexError("table " + name + " has no column " + c);
}

const ReportTable& ExperimentReport::table(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name) return t;
  throw IndexError("report has no table " + name);
}

std::vector<fs::path> ExperimentReport::write(const fs::path& dir) const {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  json tj = json::array();
  for (const auto& t : tables) {
    const fs::path p = dir / (t.name + ".csv");
    std::ofstream(p) << t.to_csv();
    written.push_back(p);
    tj.push_back(t.to_json());
  }
  const fs::path rp = dir / "report.json";
  std::ofstream(rp) << json{{"experiment", experiment}, {"summary", summary}, {"tables", tj}}.dump(2) << '\n';
  written.push_back(rp);
  return written;
}

json ExperimentConfig::to_json() const {
  json j = {{"n", n},
            {"seed", seed},
            {"resample", resample},
            {"params", params},
            {"prefix_max", prefix_max},
            {"prd_clusters", prd_clusters},
            {"mmd_reference_rows", mmd_reference_rows},
            {"repeats", repeats},
            {"bins", bins},
            {"frequency_generate", frequency_generate},
            {"null_trials", null_trials},
            {"null_rows", null_rows},
            {"range_points", range_points},
            {"replicates", replicates},
            {"u_levels", u_levels},
            {"doe_mask", doe_mask}};
  if (target) j["target"] = *target;
  if (reference) j["reference"] = *reference;
  if (gamma) j["gamma"] = *gamma;
  if (lambda) j["lambda"] = *lambda;
  if (range_lo) j["range_lo"] = *range_lo;
  if (range_hi) j["range_hi"] = *range_hi;
  json g = json::array();
  for (const auto& [name, spec] : groups) g.push_back({{"name", name}, {"spec", spec}});
  j["groups"] = g;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    c.n = j.value("n", c.n);
    c.seed = j.value("seed", c.seed);
    if (j.contains("target")) c.target = j["target"].get<double>();
    if (j.contains("reference")) c.reference = j["reference"].get<Vector>();
    if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    c.resample = j.value("resample", c.resample);
    c.params = j.value("params", c.params);
    if (j.contains("groups"))
      for (const auto& g : j["groups"]) c.groups.emplace_back(g.at("name").get<std::string>(), g.at("spec").get<std::string>());
    c.prefix_max = j.value("prefix_max", c.prefix_max);
    c.prd_clusters = j.value("prd_clusters", c.prd_clusters);
    c.mmd_reference_rows = j.value("mmd_reference_rows", c.mmd_reference_rows);
    c.repeats = j.value("repeats", c.repeats);
    c.bins = j.value("bins", c.bins);
    c.frequency_generate = j.value("frequency_generate", c.frequency_generate);
    c.null_trials = j.value("null_trials", c.null_trials);
    c.null_rows = j.value("null_rows", c.null_rows);
    c.range_points = j.value("range_points", c.range_points);
    if (j.contains("range_lo")) c.range_lo = j["range_lo"].get<double>();
    if (j.contains("range_hi")) c.range_hi = j["range_hi"].get<double>();
    c.replicates = j.value("replicates", c.replicates);
    c.u_levels = j.value("u_levels", c.u_levels);
    c.doe_mask = j.value("doe_mask", c.doe_mask);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  if (c.n == 0) throw ConfigError("experiment config: n must be positive");
  return c;
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"fix-scan",  "component-scan", "prefix-scan", "stability",
                                              "frequency", "correlation",    "range-scan",  "doe"};
  return names;
}

namespace {

struct Batch {
  double mean_perf = 0.0;
  double mape = 0.0;
  double feasible_rate = 0.0;
};

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

class Driver {
 public:
  Driver(const ModelBundle& b, const ExperimentConfig& c) : bundle(b), cfg(c), eval(b) {
    target = cfg.target.value_or(bundle.default_target());
    reference = cfg.reference.value_or(bundle.default_reference());
    if (reference.size() != bundle.schema.dim()) throw ConfigError("experiment reference has the wrong length");
    // Environment defaults to the median of each training column.
    for (std::size_t e = 0; e < bundle.schema.environment.size(); ++e) {
      std::vector<double> col;
      for (const auto& row : bundle.training.environment) col.push_back(row[e]);
      environment.emplace_back(bundle.schema.environment[e], col.empty() ? 0.0 : percentile(col, 0.5));
    }
  }

  GenerateRequest request(double tgt, const std::string& mask, std::uint64_t seed) const {
    GenerateRequest r;
    r.condition.performance_target = tgt;
    r.condition.environment = environment;
    r.mask_spec = mask;
    r.reference = reference;
    r.n = cfg.n;
    r.seed = seed;
    r.gamma = cfg.gamma;
    r.lambda = cfg.lambda;
    r.resample = cfg.resample;
    return r;
  }

  Batch measure(const std::vector<Vector>& designs, double tgt) const {
    Batch b;
    std::vector<double> perf;
    std::size_t feas = 0;
    for (const auto& d : designs) {
      perf.push_back(eval.performance(d));
      if (eval.feasible(d)) ++feas;
    }
    b.mean_perf = std::accumulate(perf.begin(), perf.end(), 0.0) / static_cast<double>(perf.size());
    b.mape = mape(perf, tgt);
    b.feasible_rate = static_cast<double>(feas) / static_cast<double>(designs.size());
    return b;
  }

  std::vector<Vector> generate(const GenerateRequest& r) const { return run_generate(bundle, r).designs; }

  /// Normalized training subset and a bandwidth fixed across rows of a table.
  void prepare_mmd() {
    if (!mmd_reference.empty()) return;
    const auto& rows = bundle.training.designs;
    const std::size_t m = std::min(cfg.mmd_reference_rows, rows.size());
    for (std::size_t i = 0; i < m; ++i)
      mmd_reference.push_back(bundle.model.design_stats.normalize(rows[i * rows.size() / m]));
    mmd_bandwidth = median_pairwise_distance(mmd_reference);
  }

  double mmd_to_training(const std::vector<Vector>& designs) {
    prepare_mmd();
    return mmd_rbf(bundle.model.design_stats.normalize_all(designs), mmd_reference, mmd_bandwidth).value;
  }

  std::vector<Vector> normalized_reference() {
    prepare_mmd();
    return mmd_reference;
  }

  const ModelBundle& bundle;
  const ExperimentConfig& cfg;
  DesignEvaluator eval;
  double target = 0.0;
  Vector reference;
  std::vector<std::pair<std::string, double>> environment;
  std::vector<Vector> mmd_reference;
  double mmd_bandwidth = 0.0;
};

json common_summary(const Driver& d) {
  return {{"target", d.target},
          {"reference", d.reference},
          {"n", d.cfg.n},
          {"resample", d.cfg.resample},
          {"performance_source", d.eval.has_exact() ? "exact" : "predictor"}};
}

ExperimentReport fix_scan(Driver& d) {
  ExperimentReport rep{"fix-scan", {}, common_summary(d)};
  ReportTable t{"fix_scan", {"fixed", "name", "value", "mean_perf", "mape_pct", "feasible_rate"}, {}};
  const Batch base = d.measure(d.generate(d.request(d.target, "", d.cfg.seed)), d.target);
  t.rows.push_back({"none", "", nullptr, base.mean_perf, base.mape, base.feasible_rate});
  std::vector<std::size_t> params = d.cfg.params;
  if (params.empty())
    for (std::size_t i = 0; i < d.bundle.schema.dim(); ++i) params.push_back(i);
  for (std::size_t i : params) {
    if (i >= d.bundle.schema.dim()) throw ConfigError("fix-scan parameter index out of range");
    const Batch b = d.measure(d.generate(d.request(d.target, std::to_string(i), d.cfg.seed)), d.target);
    t.rows.push_back({std::to_string(i), d.bundle.schema.names[i], d.reference[i], b.mean_perf, b.mape,
                      b.feasible_rate});
  }
  rep.tables.push_back(std::move(t));
  return rep;
}

ExperimentReport component_scan(Driver& d) {
  ExperimentReport rep{"component-scan", {}, common_summary(d)};
  auto groups = d.cfg.groups;
  const std::size_t dim = d.bundle.schema.dim();
  if (groups.empty()) {
    if (dim >= 44) {
      for (const auto& c : hull_components())
        groups.emplace_back(c.name, std::to_string(c.first) + "-" + std::to_string(c.last));
    } else {
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t a = dim * q / 4, b = dim * (q + 1) / 4;
        if (b > a) groups.emplace_back("block" + std::to_string(q + 1), std::to_string(a) + "-" + std::to_string(b - 1));
      }
    }
  }
  ReportTable t{"component_scan",
                {"group", "spec", "fixed_count", "mean_perf", "mape_pct", "feasible_rate", "mmd"}, {}};
  {
    const auto designs = d.generate(d.request(d.target, "", d.cfg.seed));
    const Batch b = d.measure(designs, d.target);
    t.rows.push_back({"none", "", 0, b.mean_perf, b.mape, b.feasible_rate, d.mmd_to_training(designs)});
  }
  for (const auto& [name, spec] : groups) {
    const Mask m = mask_from_spec(dim, spec);
    const auto designs = d.generate(d.request(d.target, spec, d.cfg.seed));
    const Batch b = d.measure(designs, d.target);
    t.rows.push_back({name, spec, m.count(), b.mean_perf, b.mape, b.feasible_rate, d.mmd_to_training(designs)});
  }
  rep.summary["mmd_bandwidth"] = d.mmd_bandwidth;
  rep.tables.push_back(std::move(t));
  return rep;
}

ExperimentReport prefix_scan(Driver& d) {
  ExperimentReport rep{"prefix-scan", {}, common_summary(d)};
  if (d.cfg.prefix_max > 7) throw ConfigError("prefix-scan covers k = 0..7 of 8");
  ReportTable t{"prefix_scan",
                {"fixed_fraction", "spec", "fixed_count", "mean_perf", "mape_pct", "feasible_rate", "mmd",
                 "prd_f8", "prd_f1_8"},
                {}};
  ReportTable curves{"prd_curves", {"fixed_fraction", "precision", "recall"}, {}};
  const auto real = d.normalized_reference();
  for (std::size_t k = 0; k <= d.cfg.prefix_max; ++k) {
    const std::string spec = k == 0 ? "" : "first-" + std::to_string(k) + "/8";
    const std::string label = k == 0 ? "none" : std::to_string(k) + "/8";
    const Mask m = mask_from_spec(d.bundle.schema.dim(), spec);
    const auto designs = d.generate(d.request(d.target, spec, d.cfg.seed));
    const Batch b = d.measure(designs, d.target);
    const double mmd = d.mmd_to_training(designs);
    json f8 = nullptr, f18 = nullptr;
    if (designs.size() >= d.cfg.prd_clusters && real.size() >= d.cfg.prd_clusters) {
      const PrdCurve c = prd(real, d.bundle.model.design_stats.normalize_all(designs), d.cfg.prd_clusters, 1001,
                             d.cfg.seed);
      const auto [a, bb] = prd_f_beta(c);
      f8 = a;
      f18 = bb;
      for (const auto& p : c.points) curves.rows.push_back({label, p.precision, p.recall});
    }
    t.rows.push_back({label, spec, m.count(), b.mean_perf, b.mape, b.feasible_rate, mmd, f8, f18});
  }
  rep.summary["mmd_bandwidth"] = d.mmd_bandwidth;
  rep.tables.push_back(std::move(t));
  if (!curves.rows.empty()) rep.tables.push_back(std::move(curves));
  return rep;
}

ExperimentReport stability(Driver& d) {
  ExperimentReport rep{"stability", {}, common_summary(d)};
  ReportTable runs{"stability_runs", {"repeat", "seed", "mape_pct", "feasible_rate"}, {}};
  std::vector<std::uint64_t> seeds;
  const StabilitySummary s = stability_run(
      [&](std::uint64_t seed, std::size_t) {
        seeds.push_back(seed);
        const Batch b = d.measure(d.generate(d.request(d.target, "", seed)), d.target);
        return StabilityRun{b.mape, b.feasible_rate};
      },
      d.cfg.repeats, d.cfg.seed);
  for (std::size_t i = 0; i < s.runs.size(); ++i)
    runs.rows.push_back({i, seeds[i], s.runs[i].mape, s.runs[i].feasibility_rate});
  ReportTable sum{"stability_summary", {"statistic", "mape_pct", "feasible_rate"}, {}};
  sum.rows.push_back({"mean", s.mean_mape, s.mean_feasibility});
  sum.rows.push_back({"std", s.std_mape, s.std_feasibility});
  rep.summary["std_kind"] = "population";
  rep.tables.push_back(std::move(runs));
  rep.tables.push_back(std::move(sum));
  return rep;
}

ExperimentReport frequency(Driver& d) {
  ExperimentReport rep{"frequency", {}, common_summary(d)};
  std::vector<std::string> cols{"param", "name", "highest_midpoint", "highest_count", "lowest_midpoint",
                                "lowest_count"};
  if (d.cfg.frequency_generate)
    for (const char* c : {"mape_at_highest_pct", "mape_at_lowest_pct"}) cols.push_back(c);
  ReportTable t{"frequency", cols, {}};
  ReportTable hist{"frequency_histograms", {"param", "bin", "lo", "hi", "count"}, {}};
  const auto& rows = d.bundle.training.designs;
  if (rows.empty()) throw DataError("frequency analysis needs training data");
  for (std::size_t p = 0; p < d.bundle.schema.dim(); ++p) {
    std::vector<double> col;
    for (const auto& r : rows) col.push_back(r[p]);
    const auto [lo, hi] = d.bundle.schema.bounds[p];
    const FrequencyResult f = frequency_analysis(col, lo, hi, d.cfg.bins);
    const double w = (hi - lo) / static_cast<double>(d.cfg.bins);
    for (std::size_t b = 0; b < f.histogram.size(); ++b)
      hist.rows.push_back({p, b, lo + w * static_cast<double>(b), lo + w * static_cast<double>(b + 1), f.histogram[b]});
    std::vector<json> row{p, d.bundle.schema.names[p], f.highest_midpoint, f.histogram[f.highest_bin],
                          f.lowest_midpoint, f.histogram[f.lowest_bin]};
    if (d.cfg.frequency_generate) {
      for (double value : {f.highest_midpoint, f.lowest_midpoint}) {
        GenerateRequest r = d.request(d.target, std::to_string(p), d.cfg.seed);
        (*r.reference)[p] = value;
        row.push_back(d.measure(d.generate(r), d.target).mape);
      }
    }
    t.rows.push_back(std::move(row));
  }
  rep.tables.push_back(std::move(t));
  rep.tables.push_back(std::move(hist));
  return rep;
}

ExperimentReport correlation(Driver& d) {
  ExperimentReport rep{"correlation", {}, common_summary(d)};
  const auto& data = d.bundle.training;
  const auto corr = correlation_scan(data.designs, data.performance);
  ReportTable t{"correlation", {"param", "name", "r", "p", "significant", "defined"}, {}};
  for (std::size_t p = 0; p < corr.size(); ++p) {
    const auto& c = corr[p];
    t.rows.push_back({p, d.bundle.schema.names[p], c.defined ? json(c.r) : json(nullptr),
                      c.defined ? json(c.p) : json(nullptr), c.defined && c.p < 0.05, c.defined});
  }
  // Calibration of the p-values: independent columns should be flagged at ~alpha.
  std::size_t hits = 0;
  for (std::size_t trial = 0; trial < d.cfg.null_trials; ++trial) {
    Rng rng(d.cfg.seed, trial, StreamTag::kShuffle);
    std::vector<double> x(d.cfg.null_rows), y(d.cfg.null_rows);
    for (auto& v : x) v = rng.uniform();
    for (auto& v : y) v = rng.gaussian();
    if (pearson(x, y).p < 0.05) ++hits;
  }
  const double fpr = d.cfg.null_trials ? static_cast<double>(hits) / static_cast<double>(d.cfg.null_trials) : 0.0;
  ReportTable null{"correlation_null", {"trials", "rows", "alpha", "false_positive_rate"}, {}};
  null.rows.push_back({d.cfg.null_trials, d.cfg.null_rows, 0.05, fpr});
  rep.summary["false_positive_rate"] = fpr;
  rep.tables.push_back(std::move(t));
  rep.tables.push_back(std::move(null));
  return rep;
}

ExperimentReport range_scan(Driver& d) {
  ExperimentReport rep{"range-scan", {}, common_summary(d)};
  const auto& perf = d.bundle.training.performance;
  const double lo = d.cfg.range_lo.value_or(percentile(perf, 0.1));
  const double hi = d.cfg.range_hi.value_or(percentile(perf, 0.9));
  const double data_lo = *std::min_element(perf.begin(), perf.end());
  const double data_hi = *std::max_element(perf.begin(), perf.end());
  if (d.cfg.range_points < 2) throw ConfigError("range-scan needs at least two points");
  ReportTable t{"range_scan", {"target", "mean_perf", "mape_pct", "feasible_rate", "inside_training_range"}, {}};
  for (std::size_t i = 0; i < d.cfg.range_points; ++i) {
    const double tgt = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(d.cfg.range_points - 1);
    const Batch b = d.measure(d.generate(d.request(tgt, "", d.cfg.seed)), tgt);
    t.rows.push_back({tgt, b.mean_perf, b.mape, b.feasible_rate, tgt >= data_lo && tgt <= data_hi});
  }
  rep.summary["range"] = {lo, hi};
  rep.tables.push_back(std::move(t));
  return rep;
}

ExperimentReport doe(Driver& d) {
  ExperimentReport rep{"doe", {}, common_summary(d)};
  DoePlan plan = DoePlan::standard(d.cfg.replicates, d.cfg.seed);
  plan.factors[2].levels = d.cfg.u_levels;
  mask_from_spec(d.bundle.schema.dim(), d.cfg.doe_mask);  // validate before running
  if (!d.bundle.classifier || !d.bundle.predictor)
    throw ConfigError("doe varies gamma and lambda, so the model needs both a feasibility classifier and a "
                      "performance predictor (train with --classifier-dataset holding both classes)");
  const DoeTable table = doe_run(plan, [&](const std::vector<double>& s, std::size_t, std::uint64_t seed) {
    GenerateRequest r = d.request(d.target, d.cfg.doe_mask, seed);
    r.lambda = s[0];
    r.gamma = s[1];
    r.resample = static_cast<std::size_t>(std::llround(s[2]));
    return d.measure(d.generate(r), d.target).mape;
  });
  ReportTable runs{"doe_runs", {"run", "lambda", "gamma", "U", "replicate", "seed", "mape_pct", "ok", "error"}, {}};
  for (const auto& r : table.rows)
    runs.rows.push_back({r.run, r.settings[0], r.settings[1], r.settings[2], r.replicate, r.seed,
                         r.ok ? json(r.response) : json(nullptr), r.ok, r.error});
  rep.tables.push_back(std::move(runs));
  const bool all_ok = std::all_of(table.rows.begin(), table.rows.end(), [](const DoeRow& r) { return r.ok; });
  if (all_ok) {
    const AnovaTable a = anova3(table);
    ReportTable at{"anova", {"source", "ss", "df", "ms", "f", "p", "significant", "note"}, {}};
    for (const auto& r : a.rows) {
      const bool effect = r.source != "error" && r.source != "total";
      std::string note = r.flag;
      if (r.interaction) note += std::string(note.empty() ? "" : "; ") + "interaction";
      at.rows.push_back({r.source, r.ss, r.df, effect || r.source == "error" ? json(r.ms) : json(nullptr),
                         effect ? (std::isinf(r.f) ? json("inf") : json(r.f)) : json(nullptr),
                         effect ? json(r.p) : json(nullptr), effect ? json(r.significant) : json(nullptr), note});
    }
    rep.tables.push_back(std::move(at));
  } else {
    rep.summary["anova"] = "skipped: at least one DOE run failed";
  }
  return rep;
}

}  // namespace

ExperimentReport run_experiment(const std::string& name, const ModelBundle& bundle, const ExperimentConfig& cfg) {
  Driver d(bundle, cfg);
  ExperimentReport rep;
  if (name == "fix-scan") rep = fix_scan(d);
  else if (name == "component-scan") rep = component_scan(d);
  else if (name == "prefix-scan") rep = prefix_scan(d);
  else if (name == "stability") rep = stability(d);
  else if (name == "frequency") rep = frequency(d);
  else if (name == "correlation") rep = correlation(d);
  else if (name == "range-scan") rep = range_scan(d);
  else if (name == "doe") rep = doe(d);
  else throw ConfigError("unknown experiment '" + name + "'");
  rep.summary["config"] = cfg.to_json();
  return rep;
}

}  // namespace tabdiff
