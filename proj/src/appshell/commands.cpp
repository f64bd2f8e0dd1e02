#include "tabdiff/appshell/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

#include "tabdiff/airfoil.hpp"
#include "tabdiff/appshell/bundle.hpp"
#include "tabdiff/appshell/experiments.hpp"
#include "tabdiff/appshell/generate.hpp"
#include "tabdiff/evalkit.hpp"

namespace tabdiff {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string need_string(const json& c, const char* key) {
  if (!c.contains(key) || !c[key].is_string()) throw ConfigError(std::string("missing '") + key + "'");
  return c[key].get<std::string>();
}

RunManifest start_manifest(const std::string& command, const json& config) {
  RunManifest m;
  m.run_id = new_run_id(command);
  m.command = command;
  m.config = config;
  m.seed = config.value("seed", std::uint64_t{0});
  return m;
}

RunManifest cmd_train(const json& c) {
  const auto t0 = Clock::now();
  RunManifest m = start_manifest("train", c);
  const fs::path dataset = need_string(c, "dataset");
  const fs::path schema_path = need_string(c, "schema");
  const fs::path out = need_string(c, "out");
  if (!fs::exists(dataset)) throw DataError("dataset not found: " + dataset.string());
  const DesignSchema schema = DesignSchema::load(schema_path);
  const TabularDataset data = load_tabular(dataset, schema);
  const TrainPlan plan = TrainPlan::from_json(c.value("plan", json::object()));
  std::optional<TabularDataset> clf_data;
  if (c.contains("classifier_dataset") && c["classifier_dataset"].is_string())
    clf_data = load_tabular(c["classifier_dataset"].get<std::string>(), schema);
  TrainOutcome o = train_bundle(data, plan, c.value("problem", ""), clf_data ? &*clf_data : nullptr);
  o.bundle.name = c.value("name", out.filename().string());
  o.bundle.metadata["training_summary"] = o.summary();
  save_bundle(o.bundle, out);
  m.seed = plan.diffusion.seed;
  m.inputs = {dataset.string(), schema_path.string()};
  if (clf_data) m.inputs.push_back(c["classifier_dataset"].get<std::string>());
  m.outputs = {out.string()};
  m.metrics = o.summary();
  m.metrics["out_of_bounds_rows"] = data.out_of_bounds_rows.size();
  m.metrics["train_seconds"] = o.seconds;
  m.wall_clock_seconds = since(t0);
  save_manifest(m, manifest_path_for(out, true));
  return m;
}

RunManifest cmd_generate(const std::string& command, const json& c) {
  const auto t0 = Clock::now();
  RunManifest m = start_manifest(command, c);
  const fs::path ckpt = need_string(c, "ckpt");
  const fs::path out = need_string(c, "out");
  const ModelBundle bundle = load_bundle(ckpt);
  const GenerateRequest req = GenerateRequest::from_json(c.at("request"));
  const GenerateResult res = run_generate(bundle, req);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_generate_csv(out, bundle, res);
  m.seed = req.seed;
  m.inputs = {ckpt.string()};
  m.outputs = {out.string()};
  m.wall_clock_seconds = since(t0);
  json metrics = {{"n", res.designs.size()}, {"mask", mask_to_spec(res.mask)}, {"sampling_seconds", res.seconds}};
  const DesignEvaluator eval(bundle);
  if (!res.designs.empty() && req.condition.performance_target != 0.0) {
    std::vector<double> perf;
    for (const auto& d : res.designs) perf.push_back(eval.performance(d));
    metrics["mape_pct"] = mape(perf, req.condition.performance_target);
    metrics["performance_source"] = eval.has_exact() ? "exact" : "predictor";
  }
  std::size_t feas = static_cast<std::size_t>(std::count(res.feasible.begin(), res.feasible.end(), true));
  if (!res.designs.empty()) metrics["feasible_rate"] = static_cast<double>(feas) / static_cast<double>(res.designs.size());
  m.metrics = metrics;
  save_manifest(m, manifest_path_for(out, false));
  return m;
}

/// Design columns shared by both files, skipping label/derived columns.
std::vector<std::size_t> pick_columns(const std::vector<std::string>& header,
                                      const std::vector<std::string>& wanted) {
  std::vector<std::size_t> idx;
  for (const auto& w : wanted) {
    auto it = std::find(header.begin(), header.end(), w);
    if (it == header.end()) throw ShapeError("column '" + w + "' missing from one of the sets");
    idx.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  return idx;
}

std::vector<Vector> select(const std::vector<Vector>& rows, const std::vector<std::size_t>& idx) {
  std::vector<Vector> out;
  for (const auto& r : rows) {
    Vector v;
    for (auto i : idx) v.push_back(r[i]);
    out.push_back(std::move(v));
  }
  return out;
}

RunManifest cmd_eval(const json& c) {
  const auto t0 = Clock::now();
  RunManifest m = start_manifest("eval", c);
  const std::string metric = need_string(c, "metric");
  const fs::path a_path = need_string(c, "a");
  const fs::path out = need_string(c, "out");
  const auto [ha, ra] = read_numeric_csv(a_path);
  m.inputs = {a_path.string()};
  json report = {{"metric", metric}};

  if (metric == "mape") {
    if (!c.contains("target")) throw ConfigError("eval mape needs --target");
    std::string col = c.value("column", "");
    if (col.empty()) col = std::find(ha.begin(), ha.end(), "perf") != ha.end() ? "perf" : "perf_pred";
    const auto idx = pick_columns(ha, {col});
    std::vector<double> values;
    for (const auto& r : ra) values.push_back(r[idx[0]]);
    report["column"] = col;
    report["target"] = c["target"].get<double>();
    report["n"] = values.size();
    report["mape_pct"] = mape(values, c["target"].get<double>());
  } else if (metric == "mmd" || metric == "prd") {
    const fs::path b_path = need_string(c, "b");
    m.inputs.push_back(b_path.string());
    const auto [hb, rb] = read_numeric_csv(b_path);
    static const std::set<std::string> skip{"perf", "perf_pred", "feasible"};
    std::vector<std::string> cols;
    for (const auto& h : ha)
      if (!skip.count(h) && std::find(hb.begin(), hb.end(), h) != hb.end()) cols.push_back(h);
    if (cols.empty()) throw ShapeError("the two sets share no design columns");
    const auto a = select(ra, pick_columns(ha, cols));
    const auto b = select(rb, pick_columns(hb, cols));
    report["columns"] = cols;
    if (metric == "mmd") {
      std::optional<double> bw;
      if (c.contains("bandwidth") && c["bandwidth"].is_number()) bw = c["bandwidth"].get<double>();
      report["result"] = to_json(mmd_rbf(a, b, bw));
    } else {
      const PrdCurve curve = prd(a, b, c.value("clusters", std::size_t{20}), c.value("grid", std::size_t{1001}),
                                 c.value("seed", std::uint64_t{0}));
      report["result"] = to_json(curve);
      const fs::path csv = fs::path(out.string() + ".prd.csv");
      std::ofstream(csv) << prd_to_csv(curve);
      m.outputs.push_back(csv.string());
    }
  } else {
    throw ConfigError("unknown metric '" + metric + "' (expected mape, mmd or prd)");
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream(out) << report.dump(2) << '\n';
  m.outputs.insert(m.outputs.begin(), out.string());
  m.metrics = report.contains("result") && report["result"].contains("mmd") ? json{{"mmd", report["result"]["mmd"]}}
                                                                            : json::object();
  if (report.contains("mape_pct")) m.metrics["mape_pct"] = report["mape_pct"];
  m.wall_clock_seconds = since(t0);
  save_manifest(m, manifest_path_for(out, false));
  return m;
}

RunManifest cmd_experiment(const json& c) {
  const auto t0 = Clock::now();
  RunManifest m = start_manifest("experiment", c);
  const std::string name = need_string(c, "name");
  const fs::path ckpt = need_string(c, "ckpt");
  const fs::path out = need_string(c, "out");
  const ModelBundle bundle = load_bundle(ckpt);
  const ExperimentConfig cfg = ExperimentConfig::from_json(c.value("config", json::object()));
  const ExperimentReport rep = run_experiment(name, bundle, cfg);
  for (const auto& p : rep.write(out)) m.outputs.push_back(p.string());
  m.inputs = {ckpt.string()};
  m.seed = cfg.seed;
  m.metrics = rep.summary;
  m.wall_clock_seconds = since(t0);
  save_manifest(m, manifest_path_for(out, true));
  return m;
}

RunManifest cmd_synth(const json& c) {
  const auto t0 = Clock::now();
  RunManifest m = start_manifest("synth", c);
  const std::string problem = c.value("problem", std::string(SyntheticProblem::kName));
  const std::size_t n = c.value("n", std::size_t{2000});
  const std::uint64_t seed = c.value("seed", std::uint64_t{0});
  const fs::path out = need_string(c, "out");
  const fs::path schema_out = c.value("schema_out", out.string() + ".schema.json");
  TabularDataset data;
  if (problem == SyntheticProblem::kName) {
    SyntheticProblem p;
    data = c.value("mixed", false) ? synth_generate_mixed(p, n, seed) : synth_generate(p, n, seed);
  } else if (problem == AirfoilProxy::kName) {
    data = naca_dataset(n, c.value("stations", std::size_t{16}), seed);
  } else {
    throw ConfigError("unknown problem '" + problem + "' (expected synthetic16 or naca-proxy)");
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_tabular(out, data);
  std::ofstream(schema_out) << data.schema.to_json().dump(2) << '\n';
  m.outputs = {out.string(), schema_out.string()};
  m.metrics = {{"rows", data.size()}};
  m.wall_clock_seconds = since(t0);
  save_manifest(m, manifest_path_for(out, false));
  return m;
}

}  // namespace

RunManifest run_command(const std::string& command, const json& config) {
  if (command == "train") return cmd_train(config);
  if (command == "sample" || command == "repaint") return cmd_generate(command, config);
  if (command == "eval") return cmd_eval(config);
  if (command == "experiment") return cmd_experiment(config);
  if (command == "synth") return cmd_synth(config);
  throw ConfigError("unknown command '" + command + "'");
}

RunManifest replay_manifest(const RunManifest& manifest, const std::optional<fs::path>& out_dir) {
  json config = manifest.config;
  if (out_dir) {
    fs::create_directories(*out_dir);
    for (const char* key : {"out", "schema_out"})
      if (config.contains(key) && config[key].is_string())
        config[key] = (*out_dir / fs::path(config[key].get<std::string>()).filename()).string();
  }
  return run_command(manifest.command, config);
}

std::vector<double> parse_reference(const std::string& text, std::size_t dim, const std::vector<std::string>& names) {
  const bool numeric_list = !text.empty() && text.find_first_not_of("0123456789+-.eE, \t") == std::string::npos;
  if (numeric_list) {
    std::vector<double> v;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t end = text.find(',', pos);
      if (end == std::string::npos) end = text.size();
      std::string item = text.substr(pos, end - pos);
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (!item.empty()) v.push_back(parse_double(item));
      pos = end + 1;
    }
    if (v.size() != dim)
      throw ShapeError("reference has " + std::to_string(v.size()) + " values, model expects " + std::to_string(dim));
    return v;
  }
  fs::path path = text;
  std::size_t row = 0;
  const auto colon = text.rfind(':');
  if (!fs::exists(path) && colon != std::string::npos) {
    path = text.substr(0, colon);
    row = static_cast<std::size_t>(std::stoul(text.substr(colon + 1)));
  }
  if (!fs::exists(path)) throw DataError("reference file not found: " + path.string());
  const auto [header, rows] = read_numeric_csv(path);
  if (row >= rows.size()) throw IndexError("reference row " + std::to_string(row) + " not in " + path.string());
  bool has_names = true;
  for (const auto& n : names)
    if (std::find(header.begin(), header.end(), n) == header.end()) has_names = false;
  if (has_names) return select({rows[row]}, pick_columns(header, names)).front();
  if (rows[row].size() != dim) throw ShapeError("reference row width does not match the model");
  return rows[row];
}

}  // namespace tabdiff
