// tabdiff command line: dataset synthesis, training, sampling, RePaint completion,
// metrics, experiment drivers, the HTTP service, and manifest replay.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tabdiff/appshell/bundle.hpp"
#include "tabdiff/appshell/commands.hpp"
#include "tabdiff/appshell/experiments.hpp"
#include "tabdiff/appshell/generate.hpp"
#include "tabdiff/appshell/service.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw tabdiff::ConfigError("config not found: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw tabdiff::ConfigError("malformed config " + path + ": " + e.what());
  }
}

void print_manifest(const tabdiff::RunManifest& m) {
  std::cout << "run " << m.run_id << " (" << m.wall_clock_seconds << " s)\n";
  for (const auto& o : m.outputs) std::cout << "  wrote " << o << "\n";
  if (!m.metrics.empty()) std::cout << "  " << m.metrics.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided tabular diffusion for parametric design generation and completion"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and its schema");
  std::string synth_problem = "synthetic16", synth_out, synth_schema;
  std::size_t synth_n = 2000, synth_stations = 16;
  std::uint64_t synth_seed = 0;
  bool synth_mixed = false;
  synth->add_option("--problem", synth_problem, "synthetic16 or naca-proxy");
  synth->add_option("--n", synth_n, "rows");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--stations", synth_stations, "airfoil stations per surface");
  synth->add_flag("--mixed", synth_mixed, "include infeasible rows (classifier training data)");
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--schema-out", synth_schema, "defaults to <out>.schema.json");

  // train
  auto* train = app.add_subcommand("train", "Train a model directory from a tabular dataset");
  std::string tr_dataset, tr_schema, tr_config, tr_out, tr_problem, tr_clf;
  std::optional<std::size_t> tr_epochs;
  std::optional<std::uint64_t> tr_seed;
  train->add_option("--dataset", tr_dataset)->required();
  train->add_option("--schema", tr_schema)->required();
  train->add_option("--config", tr_config, "training plan JSON");
  train->add_option("--out", tr_out)->required();
  train->add_option("--epochs", tr_epochs, "overrides the plan's diffusion epochs");
  train->add_option("--seed", tr_seed, "overrides the plan's seed");
  train->add_option("--problem", tr_problem, "synthetic16 or naca-proxy enables exact evaluation");
  train->add_option("--classifier-dataset", tr_clf, "labelled rows for the feasibility classifier");

  // sample / repaint share most options
  struct GenOpts {
    std::string ckpt, out, env, mask, reference, alignment = "canonical";
    std::optional<double> target, gamma, lambda;
    std::size_t n = 16, resample = 20;
    std::uint64_t seed = 0;
  } so, ro;
  auto add_gen = [](CLI::App* c, GenOpts& o) {
    c->add_option("--ckpt", o.ckpt)->required();
    c->add_option("--target", o.target, "performance target (default: median training label)");
    c->add_option("--env", o.env, "environment k=v,...");
    c->add_option("--n", o.n);
    c->add_option("--seed", o.seed);
    c->add_option("--gamma", o.gamma);
    c->add_option("--lambda", o.lambda);
    c->add_option("--out", o.out)->required();
  };
  auto* sample = app.add_subcommand("sample", "Guided sampling from a trained model");
  add_gen(sample, so);
  auto* repaint = app.add_subcommand("repaint", "Complete a partially fixed design");
  add_gen(repaint, ro);
  repaint->add_option("--reference", ro.reference, "v1,v2,... or file.csv[:row]")->required();
  repaint->add_option("--mask", ro.mask, tabdiff::kMaskGrammar)->required();
  repaint->add_option("--resample", ro.resample, "U, resampling passes per step");
  repaint->add_option("--alignment", ro.alignment, "canonical or literal");

  // eval
  auto* eval = app.add_subcommand("eval", "Metric report for generated designs");
  std::string ev_metric, ev_a, ev_b, ev_out, ev_column;
  std::optional<double> ev_target, ev_bandwidth;
  std::size_t ev_clusters = 20;
  eval->add_option("metric", ev_metric, "mape, mmd or prd")->required()->check(CLI::IsMember({"mape", "mmd", "prd"}));
  eval->add_option("--a", ev_a)->required();
  eval->add_option("--b", ev_b);
  eval->add_option("--target", ev_target);
  eval->add_option("--column", ev_column, "value column for mape (default perf, else perf_pred)");
  eval->add_option("--bandwidth", ev_bandwidth, "RBF bandwidth (default: median heuristic)");
  eval->add_option("--clusters", ev_clusters, "PRD cluster count");
  eval->add_option("--out", ev_out)->required();

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run an experiment driver");
  std::string ex_name, ex_ckpt, ex_config, ex_out;
  exp->add_option("name", ex_name)->required()->check(CLI::IsMember(tabdiff::experiment_names()));
  exp->add_option("--ckpt", ex_ckpt)->required();
  exp->add_option("--config", ex_config, "experiment config JSON");
  exp->add_option("--out", ex_out)->required();

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API for the mask editor");
  std::string sv_models, sv_host = "127.0.0.1";
  int sv_port = 8080;
  std::size_t sv_workers = 1;
  serve->add_option("--models", sv_models, "model directory or a directory of them")->required();
  serve->add_option("--host", sv_host);
  serve->add_option("--port", sv_port);
  serve->add_option("--workers", sv_workers, "concurrent generation jobs");

  // replay
  auto* replay = app.add_subcommand("replay", "Re-execute a run manifest");
  std::string rp_manifest, rp_out;
  replay->add_option("--manifest", rp_manifest)->required();
  replay->add_option("--out-dir", rp_out, "write outputs here instead of the original paths");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      json c = {{"problem", synth_problem}, {"n", synth_n}, {"seed", synth_seed}, {"mixed", synth_mixed},
                {"stations", synth_stations}, {"out", synth_out}};
      if (!synth_schema.empty()) c["schema_out"] = synth_schema;
      print_manifest(tabdiff::run_command("synth", c));
    } else if (train->parsed()) {
      json plan = read_json_file(tr_config);
      if (tr_epochs) plan["epochs"] = *tr_epochs;
      if (tr_seed) plan["seed"] = *tr_seed;
      json c = {{"dataset", tr_dataset}, {"schema", tr_schema}, {"out", tr_out}, {"plan", plan}, {"problem", tr_problem}};
      if (!tr_clf.empty()) c["classifier_dataset"] = tr_clf;
      print_manifest(tabdiff::run_command("train", c));
    } else if (sample->parsed() || repaint->parsed()) {
      const bool is_repaint = repaint->parsed();
      const GenOpts& o = is_repaint ? ro : so;
      const tabdiff::ModelBundle bundle = tabdiff::load_bundle(o.ckpt);
      tabdiff::GenerateRequest r;
      r.condition.performance_target = o.target.value_or(bundle.default_target());
      r.condition.environment = tabdiff::parse_env_assignments(o.env);
      r.n = o.n;
      r.seed = o.seed;
      r.gamma = o.gamma;
      r.lambda = o.lambda;
      if (is_repaint) {
        r.mask_spec = o.mask;
        r.reference = tabdiff::parse_reference(o.reference, bundle.schema.dim(), bundle.schema.names);
        r.resample = o.resample;
        if (o.alignment == "literal") r.alignment = tabdiff::AlignmentMode::Literal;
        else if (o.alignment != "canonical") throw tabdiff::ConfigError("--alignment must be canonical or literal");
      }
      const json c = {{"ckpt", o.ckpt}, {"out", o.out}, {"request", r.to_json()}};
      print_manifest(tabdiff::run_command(is_repaint ? "repaint" : "sample", c));
    } else if (eval->parsed()) {
      json c = {{"metric", ev_metric}, {"a", ev_a}, {"out", ev_out}, {"clusters", ev_clusters}};
      if (!ev_b.empty()) c["b"] = ev_b;
      if (ev_target) c["target"] = *ev_target;
      if (ev_bandwidth) c["bandwidth"] = *ev_bandwidth;
      if (!ev_column.empty()) c["column"] = ev_column;
      if ((ev_metric == "mmd" || ev_metric == "prd") && ev_b.empty())
        throw tabdiff::ConfigError("eval " + ev_metric + " needs --b");
      print_manifest(tabdiff::run_command("eval", c));
    } else if (exp->parsed()) {
      // Resolve defaults now so the manifest replays the exact configuration.
      const json cfg = tabdiff::ExperimentConfig::from_json(read_json_file(ex_config)).to_json();
      print_manifest(tabdiff::run_command("experiment", {{"name", ex_name}, {"ckpt", ex_ckpt}, {"config", cfg}, {"out", ex_out}}));
    } else if (serve->parsed()) {
      auto registry = std::make_shared<tabdiff::ModelRegistry>();
      const std::size_t loaded = registry->load_directory(sv_models);
      std::cout << "loaded " << loaded << " model(s); listening on http://" << sv_host << ":" << sv_port << std::endl;
      tabdiff::Service service(registry, sv_workers);
      service.listen(sv_host, sv_port);
    } else if (replay->parsed()) {
      const tabdiff::RunManifest m = tabdiff::load_manifest(rp_manifest);
      std::optional<fs::path> out;
      if (!rp_out.empty()) out = rp_out;
      print_manifest(tabdiff::replay_manifest(m, out));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
