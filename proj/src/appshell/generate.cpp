#include "tabdiff/appshell/generate.hpp"

#include <atomic>
#include <chrono>

#include "tabdiff/airfoil.hpp"

namespace tabdiff {

using nlohmann::json;

json GenerateRequest::to_json() const {
  json env = json::object();
  for (const auto& [k, v] : condition.environment) env[k] = v;
  json j = {{"condition", {{"target", condition.performance_target}, {"env", env}}},
            {"mask_spec", mask_spec},
            {"n", n},
            {"seed", seed},
            {"resample_u", resample},
            {"alignment", alignment == AlignmentMode::Canonical ? "canonical" : "literal"},
            {"literal_noise_coupling", literal_noise_coupling}};
  if (reference) j["reference"] = *reference;
  if (gamma) j["gamma"] = *gamma;
  if (lambda) j["lambda"] = *lambda;
  return j;
}

GenerateRequest GenerateRequest::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("generate request must be a JSON object");
  GenerateRequest r;
  try {
    if (j.contains("condition")) {
      const json& c = j["condition"];
      if (c.is_number()) {
        r.condition.performance_target = c.get<double>();
      } else if (c.is_object()) {
        r.condition.performance_target = c.at("target").get<double>();
        if (c.contains("env"))
          for (const auto& [k, v] : c["env"].items()) r.condition.environment.emplace_back(k, v.get<double>());
      } else {
        throw ConfigError("condition must be a number or an object with 'target'");
      }
    } else if (j.contains("target")) {
      r.condition.performance_target = j["target"].get<double>();
    } else {
      throw ConfigError("generate request needs a condition");
    }
    r.mask_spec = j.value("mask_spec", "");
    if (j.contains("reference") && !j["reference"].is_null()) r.reference = j["reference"].get<Vector>();
    r.n = j.value("n", r.n);
    r.seed = j.value("seed", r.seed);
    if (j.contains("gamma") && !j["gamma"].is_null()) r.gamma = j["gamma"].get<double>();
    if (j.contains("lambda") && !j["lambda"].is_null()) r.lambda = j["lambda"].get<double>();
    r.resample = j.value("resample_u", r.resample);
    const std::string align = j.value("alignment", "canonical");
    if (align == "canonical") r.alignment = AlignmentMode::Canonical;
    else if (align == "literal") r.alignment = AlignmentMode::Literal;
    else throw ConfigError("alignment must be 'canonical' or 'literal'");
    r.literal_noise_coupling = j.value("literal_noise_coupling", true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed generate request: ") + e.what());
  }
  return r;
}

GuidanceConfig resolve_guidance(const ModelBundle& bundle, const GenerateRequest& req) {
  GuidanceConfig g;
  g.target = req.condition.performance_target;
  g.literal_noise_coupling = req.literal_noise_coupling;
  g.gamma = req.gamma.value_or(bundle.classifier ? g.gamma : 0.0);
  g.lambda = req.lambda.value_or(bundle.predictor ? g.lambda : 0.0);
  g.use_classifier = g.gamma != 0.0;
  g.use_performance = g.lambda != 0.0;
  g.validate();
  return g;
}

GenerateResult run_generate(const ModelBundle& bundle, const GenerateRequest& req,
                            const std::function<void(double)>& progress) {
  const auto start = std::chrono::steady_clock::now();
  GenerateResult res;
  res.mask = mask_from_spec(bundle.schema.dim(), req.mask_spec);
  const GuidanceConfig g = resolve_guidance(bundle, req);

  std::atomic<std::size_t> done{0};
  const ChainCallback on_chain = [&] {
    const std::size_t k = ++done;
    if (progress && req.n > 0) progress(static_cast<double>(k) / static_cast<double>(req.n));
  };

  if (!res.mask.any()) {
    res.designs = sample(bundle.model, bundle.nets(), req.condition, req.n, g, req.seed, on_chain);
  } else {
    if (!req.reference) throw ConfigError("a mask needs a reference design");
    if (req.reference->size() != bundle.schema.dim())
      throw ShapeError("reference has " + std::to_string(req.reference->size()) + " values, model expects " +
                       std::to_string(bundle.schema.dim()));
    RepaintConfig cfg;
    cfg.resample = req.resample;
    cfg.guidance = g;
    cfg.seed = req.seed;
    cfg.alignment = req.alignment;
    res.designs = repaint_sample(bundle.model, bundle.nets(), *req.reference, res.mask, req.condition, cfg,
                                 req.n, on_chain);
  }

  const DesignEvaluator eval(bundle);
  for (const auto& d : res.designs) {
    res.predicted.push_back(eval.predicted(d));
    res.exact.push_back(eval.exact(d));
    res.feasible.push_back(eval.feasible(d));
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

void write_generate_csv(const std::filesystem::path& path, const ModelBundle& bundle,
                        const GenerateResult& result) {
  std::vector<std::pair<std::string, std::vector<double>>> extra;
  if (bundle.predictor) {
    std::vector<double> col;
    for (const auto& p : result.predicted) col.push_back(*p);
    extra.emplace_back("perf_pred", std::move(col));
  }
  if (DesignEvaluator(bundle).has_exact()) {
    std::vector<double> col;
    for (const auto& p : result.exact) col.push_back(*p);
    extra.emplace_back("perf", std::move(col));
  }
  std::vector<double> feas;
  for (bool f : result.feasible) feas.push_back(f ? 1.0 : 0.0);
  extra.emplace_back("feasible", std::move(feas));
  write_designs_csv(path, bundle.schema, result.designs, extra);
}

json result_payload(const ModelBundle& bundle, const GenerateResult& result) {
  json designs = json::array();
  for (std::size_t i = 0; i < result.designs.size(); ++i) {
    const Vector& d = result.designs[i];
    json item = {{"values", d}, {"feasible", static_cast<bool>(result.feasible[i])}};
    item["predicted_performance"] = result.predicted[i] ? json(*result.predicted[i]) : json(nullptr);
    if (result.exact[i]) item["exact_performance"] = *result.exact[i];
    if (bundle.schema.kind == "airfoil") {
      const std::size_t n = d.size() / 2;
      const auto xs = cosine_stations(n);
      json upper = json::array(), lower = json::array();
      for (std::size_t k = 0; k < n; ++k) {
        upper.push_back({{"x", xs[k]}, {"y", d[k]}, {"fixed", result.mask[k]}});
        lower.push_back({{"x", xs[k]}, {"y", d[n + k]}, {"fixed", result.mask[n + k]}});
      }
      item["polyline"] = {{"upper", upper}, {"lower", lower}};
    } else {
      json named = json::array();
      for (std::size_t k = 0; k < d.size(); ++k)
        named.push_back({{"name", bundle.schema.names[k]}, {"value", d[k]}, {"fixed", result.mask[k]}});
      item["parameters"] = named;
    }
    designs.push_back(std::move(item));
  }
  return {{"kind", bundle.schema.kind},
          {"mask", {{"spec", mask_to_spec(result.mask)}, {"bits", result.mask.bits}}},
          {"designs", designs}};
}

std::vector<std::pair<std::string, double>> parse_env_assignments(const std::string& text) {
  std::vector<std::pair<std::string, double>> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    const std::string item = text.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("environment item '" + item + "' is not k=v");
    try {
      out.emplace_back(item.substr(0, eq), parse_double(item.substr(eq + 1)));
    } catch (const Error&) {
      throw ConfigError("environment value in '" + item + "' is not a number");
    }
  }
  return out;
}

}  // namespace tabdiff
