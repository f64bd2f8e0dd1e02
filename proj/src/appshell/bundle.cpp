#include "tabdiff/appshell/bundle.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

#include "tabdiff/airfoil.hpp"
#include "tabdiff/checkpoint.hpp"

namespace tabdiff {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kBundleFile = "bundle.json";

json schedule_json(const NoiseSchedule& s) {
  return {{"steps", s.steps}, {"beta", s.beta}, {"alpha", s.alpha}, {"alpha_bar", s.alpha_bar}, {"sigma", s.sigma}};
}

NoiseSchedule schedule_from(const json& j) {
  NoiseSchedule s;
  s.steps = j.at("steps").get<std::size_t>();
  s.beta = j.at("beta").get<std::vector<double>>();
  s.alpha = j.at("alpha").get<std::vector<double>>();
  s.alpha_bar = j.at("alpha_bar").get<std::vector<double>>();
  s.sigma = j.at("sigma").get<std::vector<double>>();
  for (const auto* v : {&s.beta, &s.alpha, &s.alpha_bar, &s.sigma})
    if (v->size() != s.steps) throw ShapeError("schedule arrays do not match the step count");
  return s;
}

json guidance_cfg_json(const GuidanceTrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"seed", c.seed}, {"test_fraction", c.test_fraction}, {"clean_fraction", c.clean_fraction}};
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

GuidanceTrainConfig guidance_cfg_from(const json& j, GuidanceTrainConfig c, const std::string& where) {
  check_keys(j, {"epochs", "batch_size", "learning_rate", "seed", "test_fraction", "clean_fraction"}, where);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  c.clean_fraction = j.value("clean_fraction", c.clean_fraction);
  return c;
}

std::size_t median_index(const std::vector<double>& perf) {
  std::vector<double> sorted = perf;
  std::sort(sorted.begin(), sorted.end());
  const double med = sorted[sorted.size() / 2];
  std::size_t best = 0;
  for (std::size_t i = 1; i < perf.size(); ++i)
    if (std::abs(perf[i] - med) < std::abs(perf[best] - med)) best = i;
  return best;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("file not found: " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

}  // namespace

GuidanceNets ModelBundle::nets() const {
  return GuidanceNets{classifier ? &*classifier : nullptr, predictor ? &*predictor : nullptr};
}

Vector ModelBundle::default_reference() const {
  if (training.size() == 0) throw DataError("bundle has no training data for a default reference");
  return training.designs[median_index(training.performance)];
}

double ModelBundle::default_target() const {
  if (training.size() == 0) throw DataError("bundle has no training data for a default target");
  return training.performance[median_index(training.performance)];
}

NoiseSchedule TrainPlan::schedule() const {
  if (!beta_min && !beta_max) return default_schedule(steps);
  const NoiseSchedule d = default_schedule(steps);
  return build_schedule(steps, beta_min.value_or(d.beta.front()), beta_max.value_or(d.beta.back()));
}

json TrainPlan::to_json() const {
  json j = {{"steps", steps},
            {"width", shape.width},
            {"layers", shape.layers},
            {"embed_dim", shape.embed_dim},
            {"epochs", diffusion.epochs},
            {"batch_size", diffusion.batch_size},
            {"learning_rate", diffusion.learning_rate},
            {"seed", diffusion.seed},
            {"classifier", {{"enabled", train_classifier}, {"widths", classifier_widths}}},
            {"predictor", {{"enabled", train_predictor}, {"width", predictor_width}, {"layers", predictor_layers}}},
            {"guidance_embed_dim", guidance_embed_dim}};
  if (beta_min) j["beta_min"] = *beta_min;
  if (beta_max) j["beta_max"] = *beta_max;
  j["classifier"]["training"] = guidance_cfg_json(classifier);
  j["predictor"]["training"] = guidance_cfg_json(predictor);
  return j;
}

TrainPlan TrainPlan::from_json(const json& j) {
  check_keys(j, {"steps", "beta_min", "beta_max", "width", "layers", "embed_dim", "epochs", "batch_size",
                 "learning_rate", "seed", "classifier", "predictor", "guidance_embed_dim"},
             "train config");
  TrainPlan p;
  p.steps = j.value("steps", p.steps);
  if (j.contains("beta_min")) p.beta_min = j["beta_min"].get<double>();
  if (j.contains("beta_max")) p.beta_max = j["beta_max"].get<double>();
  p.shape.width = j.value("width", p.shape.width);
  p.shape.layers = j.value("layers", p.shape.layers);
  p.shape.embed_dim = j.value("embed_dim", p.shape.embed_dim);
  p.diffusion.epochs = j.value("epochs", p.diffusion.epochs);
  p.diffusion.batch_size = j.value("batch_size", p.diffusion.batch_size);
  p.diffusion.learning_rate = j.value("learning_rate", p.diffusion.learning_rate);
  p.diffusion.seed = j.value("seed", p.diffusion.seed);
  p.guidance_embed_dim = j.value("guidance_embed_dim", p.guidance_embed_dim);
  p.classifier.seed = p.diffusion.seed + 1;
  p.predictor.seed = p.diffusion.seed + 2;
  if (j.contains("classifier")) {
    const json& c = j["classifier"];
    check_keys(c, {"enabled", "widths", "training"}, "classifier config");
    p.train_classifier = c.value("enabled", p.train_classifier);
    p.classifier_widths = c.value("widths", p.classifier_widths);
    if (c.contains("training")) p.classifier = guidance_cfg_from(c["training"], p.classifier, "classifier training");
  }
  if (j.contains("predictor")) {
    const json& c = j["predictor"];
    check_keys(c, {"enabled", "width", "layers", "training"}, "predictor config");
    p.train_predictor = c.value("enabled", p.train_predictor);
    p.predictor_width = c.value("width", p.predictor_width);
    p.predictor_layers = c.value("layers", p.predictor_layers);
    if (c.contains("training")) p.predictor = guidance_cfg_from(c["training"], p.predictor, "predictor training");
  }
  return p;
}

json TrainOutcome::summary() const {
  json losses = json::array();
  for (const auto& r : records) losses.push_back({{"epoch", r.epoch}, {"mean_loss", r.mean_loss}});
  json j = {{"loss_curve", losses}, {"rows", bundle.training.size()}};
  if (classifier)
    j["classifier"] = {{"final_loss", classifier->final_loss}, {"test_accuracy", classifier->test_accuracy},
                       {"n_train", classifier->n_train}, {"n_test", classifier->n_test}};
  if (predictor) {
    j["predictor"] = {{"final_loss", predictor->final_loss}, {"test_mape", predictor->test_mape},
                      {"n_train", predictor->n_train}, {"n_test", predictor->n_test}};
    j["predictor"]["test_r2"] = predictor->r2_defined ? json(predictor->test_r2) : json("undefined");
  }
  return j;
}

TrainOutcome train_bundle(const TabularDataset& data, const TrainPlan& plan, const std::string& problem,
                          const TabularDataset* classifier_data) {
  const auto start = std::chrono::steady_clock::now();
  data.schema.validate();

  // The generative model learns the feasible design distribution.
  TabularDataset feasible = data;
  if (data.has_feasibility()) {
    feasible.designs.clear();
    feasible.performance.clear();
    feasible.environment.clear();
    feasible.feasible.clear();
    feasible.out_of_bounds_rows.clear();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!data.feasible[i]) continue;
      feasible.designs.push_back(data.designs[i]);
      feasible.performance.push_back(data.performance[i]);
      feasible.environment.push_back(data.environment[i]);
    }
  }
  if (feasible.size() == 0) throw DataError("training dataset has no feasible rows");

  TrainOutcome out;
  ModelBundle& b = out.bundle;
  b.schema = data.schema;
  b.problem = problem;
  b.training = feasible;
  b.model = make_model(feasible, plan.schedule(), plan.shape, plan.diffusion.seed);

  const auto x0 = b.model.design_stats.normalize_all(feasible.designs);
  const auto cond = b.model.condition_stats.normalize_all(feasible.conditions());
  out.records = train(b.model, x0, cond, plan.diffusion);

  if (plan.train_predictor) {
    Rng rng(plan.predictor.seed, 0, StreamTag::kTraining);
    b.predictor = PerformancePredictor::create(b.schema.dim(), plan.guidance_embed_dim, plan.predictor_width,
                                               plan.predictor_layers, rng);
    GuidanceTrainConfig cfg = plan.predictor;
    cfg.schedule = b.model.schedule;
    out.predictor = train_predictor(*b.predictor, x0, feasible.performance, cfg);
  }

  if (plan.train_classifier) {
    const TabularDataset& cd = classifier_data ? *classifier_data : data;
    const bool both = cd.has_feasibility() && std::count(cd.feasible.begin(), cd.feasible.end(), 1) > 0 &&
                      std::count(cd.feasible.begin(), cd.feasible.end(), 0) > 0;
    if (both) {
      Rng rng(plan.classifier.seed, 0, StreamTag::kTraining);
      b.classifier = FeasibilityClassifier::create(b.schema.dim(), plan.guidance_embed_dim,
                                                   plan.classifier_widths, rng);
      GuidanceTrainConfig cfg = plan.classifier;
      cfg.schedule = b.model.schedule;
      out.classifier = train_classifier(*b.classifier, b.model.design_stats.normalize_all(cd.designs),
                                        cd.feasible, cfg);
    } else {
      b.metadata["classifier_note"] = "no classifier: feasibility labels with both classes were not provided";
    }
  }

  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  b.metadata["train_plan"] = plan.to_json();
  return out;
}

void save_bundle(const ModelBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  Checkpoint diff;
  diff.kind = "diffusion";
  diff.networks.emplace("backbone", bundle.model.eps.backbone);
  if (bundle.model.eps.condition_layer) diff.networks.emplace("condition", *bundle.model.eps.condition_layer);
  diff.normalization = bundle.model.design_stats;
  diff.metadata = {{"design_dim", bundle.model.eps.design_dim},
                   {"condition_dim", bundle.model.eps.condition_dim},
                   {"embed_dim", bundle.model.eps.embed_dim},
                   {"environment", bundle.model.environment},
                   {"condition_stats", to_json(bundle.model.condition_stats)},
                   {"schedule", schedule_json(bundle.model.schedule)}};
  save_checkpoint(diff, dir / "diffusion.json");

  json files = {{"diffusion", "diffusion.json"}, {"training", "train.csv"}};
  if (bundle.classifier) {
    Checkpoint c;
    c.kind = "classifier";
    c.networks.emplace("net", bundle.classifier->net);
    c.metadata = {{"design_dim", bundle.classifier->design_dim}, {"embed_dim", bundle.classifier->embed_dim}};
    save_checkpoint(c, dir / "classifier.json");
    files["classifier"] = "classifier.json";
  }
  if (bundle.predictor) {
    Checkpoint c;
    c.kind = "predictor";
    c.networks.emplace("net", bundle.predictor->net);
    c.metadata = {{"design_dim", bundle.predictor->design_dim},
                  {"embed_dim", bundle.predictor->embed_dim},
                  {"target_mean", bundle.predictor->target_mean},
                  {"target_std", bundle.predictor->target_std}};
    save_checkpoint(c, dir / "predictor.json");
    files["predictor"] = "predictor.json";
  }
  write_tabular(dir / "train.csv", bundle.training);
  write_json(dir / kBundleFile, {{"format", "tabdiff-bundle"},
                                 {"version", 1},
                                 {"name", bundle.name.empty() ? dir.filename().string() : bundle.name},
                                 {"problem", bundle.problem},
                                 {"schema", bundle.schema.to_json()},
                                 {"files", files},
                                 {"metadata", bundle.metadata}});
}

bool is_bundle_dir(const fs::path& dir) { return fs::is_regular_file(dir / kBundleFile); }

ModelBundle load_bundle(const fs::path& dir) {
  if (!is_bundle_dir(dir)) throw Error("checkpoint directory not found: " + dir.string());
  const json manifest = read_json(dir / kBundleFile);
  if (manifest.value("format", "") != "tabdiff-bundle") throw ParseError("not a tabdiff model directory: " + dir.string());
  ModelBundle b;
  b.name = manifest.value("name", dir.filename().string());
  b.problem = manifest.value("problem", "");
  b.schema = DesignSchema::from_json(manifest.at("schema"));
  b.metadata = manifest.value("metadata", json::object());
  const json& files = manifest.at("files");

  const Checkpoint diff = load_checkpoint(dir / files.at("diffusion").get<std::string>());
  if (diff.kind != "diffusion") throw ParseError("diffusion checkpoint has kind '" + diff.kind + "'");
  const json& m = diff.metadata;
  b.model.eps.backbone = diff.networks.at("backbone");
  if (diff.networks.count("condition")) b.model.eps.condition_layer = diff.networks.at("condition");
  b.model.eps.design_dim = m.at("design_dim").get<std::size_t>();
  b.model.eps.condition_dim = m.at("condition_dim").get<std::size_t>();
  b.model.eps.embed_dim = m.at("embed_dim").get<std::size_t>();
  b.model.environment = m.at("environment").get<std::vector<std::string>>();
  b.model.condition_stats = normalizer_from_json(m.at("condition_stats"));
  b.model.schedule = schedule_from(m.at("schedule"));
  b.model.design_stats = diff.normalization;
  if (b.model.design_dim() != b.schema.dim()) throw ShapeError("model and schema dimensions differ");

  if (files.contains("classifier")) {
    const Checkpoint c = load_checkpoint(dir / files["classifier"].get<std::string>());
    FeasibilityClassifier clf;
    clf.net = c.networks.at("net");
    clf.design_dim = c.metadata.at("design_dim").get<std::size_t>();
    clf.embed_dim = c.metadata.at("embed_dim").get<std::size_t>();
    b.classifier = std::move(clf);
  }
  if (files.contains("predictor")) {
    const Checkpoint c = load_checkpoint(dir / files["predictor"].get<std::string>());
    PerformancePredictor p;
    p.net = c.networks.at("net");
    p.design_dim = c.metadata.at("design_dim").get<std::size_t>();
    p.embed_dim = c.metadata.at("embed_dim").get<std::size_t>();
    p.target_mean = c.metadata.at("target_mean").get<double>();
    p.target_std = c.metadata.at("target_std").get<double>();
    b.predictor = std::move(p);
  }
  if (files.contains("training")) b.training = load_tabular(dir / files["training"].get<std::string>(), b.schema);
  return b;
}

bool DesignEvaluator::has_exact() const {
  return bundle_.problem == SyntheticProblem::kName || bundle_.problem == AirfoilProxy::kName;
}

std::optional<double> DesignEvaluator::exact(std::span<const double> design) const {
  if (bundle_.problem == SyntheticProblem::kName) return SyntheticProblem{}.performance(design);
  if (bundle_.problem == AirfoilProxy::kName) return AirfoilProxy(design.size() / 2).performance(design);
  return std::nullopt;
}

std::optional<double> DesignEvaluator::predicted(std::span<const double> design) const {
  if (!bundle_.predictor) return std::nullopt;
  return bundle_.predictor->predict(bundle_.model.design_stats.normalize(design), 0);
}

double DesignEvaluator::performance(std::span<const double> design) const {
  if (auto e = exact(design)) return *e;
  if (auto p = predicted(design)) return *p;
  throw ConfigError("model has neither a known performance function nor a predictor");
}

bool DesignEvaluator::feasible(std::span<const double> design) const {
  if (bundle_.problem == SyntheticProblem::kName) return SyntheticProblem{}.check(design).feasible;
  if (bundle_.classifier)
    return bundle_.classifier->probability(bundle_.model.design_stats.normalize(design), 0) > 0.5;
  return BoundsOracle(bundle_.schema).check(design).feasible;
}

}  // namespace tabdiff
