#include <doctest.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "support.hpp"
#include "tabdiff/appshell/bundle.hpp"
#include "tabdiff/appshell/commands.hpp"
#include "tabdiff/appshell/experiments.hpp"
#include "tabdiff/appshell/generate.hpp"
#include "tabdiff/appshell/manifest.hpp"
#include "tabdiff/appshell/service.hpp"
#include "tabdiff/error.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that collides with Eigen internals.
#include <httplib.h>

using namespace tabdiff;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny_plan() {
  return {{"steps", 20},
          {"epochs", 3},
          {"width", 16},
          {"layers", 3},
          {"embed_dim", 8},
          {"classifier", {{"enabled", false}}},
          {"predictor", {{"width", 16}, {"layers", 2}, {"training", {{"epochs", 3}}}}}};
}

// One tiny trained model directory shared by every case in this file.
const fs::path& shared_model() {
  static testing::ScratchDir dir("appshell");
  static const fs::path model = [] {
    const fs::path data = dir / "d.csv";
    run_command("synth", {{"problem", "synthetic16"}, {"n", 300}, {"seed", 2}, {"out", data.string()}});
    run_command("train", {{"dataset", data.string()},
                          {"schema", data.string() + ".schema.json"},
                          {"out", (dir / "tiny").string()},
                          {"problem", "synthetic16"},
                          {"plan", tiny_plan()}});
    return dir / "tiny";
  }();
  return model;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Exec {
  int status = -1;
  std::string output;
};

// Runs the CLI with stderr folded into stdout.
Exec run_cli(const std::string& args) {
  Exec e;
  const std::string cmd = std::string(TABDIFF_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) e.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  e.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return e;
}

json wait_result(httplib::Client& cli, const std::string& id) {
  for (int i = 0; i < 600; ++i) {
    auto r = cli.Get("/api/jobs/" + id);
    REQUIRE(r);
    const json j = json::parse(r->body);
    if (j["state"] == "done") return json::parse(cli.Get("/api/jobs/" + id + "/result")->body);
    if (j["state"] == "failed") FAIL("job failed: " << j.dump());
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  FAIL("job did not finish");
  return {};
}

std::string post_generate(httplib::Client& cli, const json& body, int expect = 202) {
  auto r = cli.Post("/api/generate", body.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == expect);
  const json j = json::parse(r->body);
  return j.value("job_id", "");
}

}  // namespace

TEST_CASE("train plan JSON") {
  const TrainPlan p = TrainPlan::from_json(tiny_plan());
  CHECK(p.steps == 20);
  CHECK(p.shape.width == 16);
  CHECK_FALSE(p.train_classifier);
  CHECK(TrainPlan::from_json(p.to_json()).to_json() == p.to_json());
  CHECK_THROWS_AS(TrainPlan::from_json({{"widht", 3}}), ConfigError);
}

TEST_CASE("bundle save and load round trip") {
  const ModelBundle a = load_bundle(shared_model());
  CHECK(is_bundle_dir(shared_model()));
  CHECK_FALSE(is_bundle_dir(shared_model().parent_path()));
  testing::ScratchDir dir("bundle");
  save_bundle(a, dir / "copy");
  const ModelBundle b = load_bundle(dir / "copy");
  CHECK(b.name == a.name);
  CHECK(b.problem == "synthetic16");
  CHECK(b.schema.names == a.schema.names);
  CHECK(b.training.designs == a.training.designs);
  CHECK(b.model.eps.backbone.params.flatten() == a.model.eps.backbone.params.flatten());
  REQUIRE(b.predictor);
  CHECK_FALSE(b.classifier);

  GenerateRequest req;
  req.condition.performance_target = a.default_target();
  req.n = 4;
  req.seed = 11;
  CHECK(run_generate(a, req).designs == run_generate(b, req).designs);
  CHECK_THROWS_AS(load_bundle(dir / "missing"), Error);
}

TEST_CASE("generation requests") {
  const ModelBundle m = load_bundle(shared_model());
  GenerateRequest req;
  req.condition.performance_target = m.default_target();
  req.n = 3;
  req.mask_spec = "0-3";
  CHECK_THROWS_AS(run_generate(m, req), ConfigError);
  req.reference = m.default_reference();
  req.resample = 2;
  const GenerateResult r = run_generate(m, req);
  for (const auto& d : r.designs)
    for (std::size_t i = 0; i < 4; ++i) CHECK(d[i] == (*req.reference)[i]);
  req.mask_spec = "0-99";
  CHECK_THROWS_AS(run_generate(m, req), SpecError);

  const GenerateRequest parsed = GenerateRequest::from_json({{"condition", 0.2}, {"n", 5}, {"mask_spec", "1"}});
  CHECK(parsed.condition.performance_target == 0.2);
  CHECK(parsed.n == 5);
  CHECK(GenerateRequest::from_json(parsed.to_json()).to_json() == parsed.to_json());
  CHECK_THROWS_AS(GenerateRequest::from_json({{"n", 5}}), ConfigError);
  CHECK(parse_env_assignments("a=1,b=2.5") == std::vector<std::pair<std::string, double>>{{"a", 1.0}, {"b", 2.5}});
}

TEST_CASE("manifest replay reproduces outputs bit-exactly") {
  testing::ScratchDir dir("replay");
  const ModelBundle m = load_bundle(shared_model());
  json ref = json::array();
  for (double v : m.default_reference()) ref.push_back(v);
  const RunManifest first = run_command(
      "repaint", {{"ckpt", shared_model().string()},
                  {"out", (dir / "r.csv").string()},
                  {"request", {{"condition", m.default_target()}, {"mask_spec", "first-2/8"}, {"reference", ref},
                               {"n", 6}, {"seed", 4}, {"resample_u", 2}}}});
  const fs::path mpath = manifest_path_for(dir / "r.csv", false);
  REQUIRE(fs::exists(mpath));
  const RunManifest loaded = load_manifest(mpath);
  CHECK(loaded.run_id == first.run_id);
  CHECK(loaded.config == first.config);
  CHECK(RunManifest::from_json(loaded.to_json()).to_json() == loaded.to_json());

  const RunManifest again = replay_manifest(loaded, dir / "replayed");
  CHECK(again.run_id != first.run_id);
  CHECK(slurp(dir / "r.csv") == slurp(dir / "replayed" / "r.csv"));
  CHECK_FALSE(slurp(dir / "r.csv").empty());
  CHECK(new_run_id("x") != new_run_id("x"));
  CHECK_THROWS_AS(run_command("nope", json::object()), ConfigError);
}

TEST_CASE("reference parsing") {
  CHECK(parse_reference("1, 2,3", 3, {"a", "b", "c"}) == std::vector<double>{1, 2, 3});
  CHECK_THROWS_AS(parse_reference("1,2", 3, {"a", "b", "c"}), ShapeError);
}

TEST_CASE("HTTP service") {
  auto registry = std::make_shared<ModelRegistry>();
  CHECK(registry->load_directory(shared_model()) == 1);
  const auto bundle = registry->list().front();
  Service svc(registry, 1);
  const int port = svc.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);

  auto models = cli.Get("/api/models");
  REQUIRE(models);
  CHECK(models->status == 200);
  const json listed = json::parse(models->body)["models"];
  REQUIRE(listed.size() == 1);
  CHECK(listed[0]["name"] == bundle->name);

  const double target = bundle->default_target();
  const Vector reference = bundle->default_reference();

  SUBCASE("errors") {
    post_generate(cli, {{"model", "nope"}, {"condition", target}}, 404);
    auto bad = cli.Post("/api/generate", json{{"model", bundle->name}, {"condition", target}, {"mask_spec", "0-x"},
                                              {"reference", reference}}.dump(), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 422);
    CHECK(json::parse(bad->body).contains("grammar"));
    post_generate(cli, {{"model", bundle->name}, {"condition", target}, {"mask_spec", "0-3"}}, 400);
    CHECK(cli.Post("/api/generate", "{not json", "application/json")->status == 400);
    CHECK(cli.Get("/api/jobs/job-999")->status == 404);
    CHECK(cli.Get("/api/jobs/job-999/result")->status == 404);

    // One worker: a slow first job keeps the second queued, so its result is not ready.
    post_generate(cli, {{"model", bundle->name}, {"condition", target}, {"n", 64}, {"mask_spec", "0-3"},
                        {"reference", reference}, {"resample_u", 20}});
    const std::string queued = post_generate(cli, {{"model", bundle->name}, {"condition", target}, {"n", 1}});
    auto early = cli.Get("/api/jobs/" + queued + "/result");
    REQUIRE(early);
    CHECK(early->status == 409);
    CHECK(svc.wait(queued, 120));
  }

  SUBCASE("identical requests give identical payloads") {
    const json body = {{"model", bundle->name}, {"condition", target}, {"n", 5}, {"seed", 3},
                       {"mask_spec", "2-5"}, {"reference", reference}, {"resample_u", 2}};
    const json a = wait_result(cli, post_generate(cli, body));
    const json b = wait_result(cli, post_generate(cli, body));
    CHECK(a == b);
    CHECK(a["designs"].size() == 5);
    CHECK(a["mask"]["spec"] == "2-5");
  }

  SUBCASE("full mask returns the reference") {
    const json r = wait_result(cli, post_generate(cli, {{"model", bundle->name}, {"condition", target}, {"n", 3},
                                                        {"mask_spec", "first-8/8"}, {"reference", reference}}));
    for (const auto& d : r["designs"]) {
      CHECK(d["values"].get<Vector>() == reference);
      for (const auto& p : d["parameters"]) CHECK(p["fixed"] == true);
    }
  }

  SUBCASE("CLI and service agree") {
    testing::ScratchDir dir("cli-vs-http");
    std::string ref_text;
    for (double v : reference) ref_text += (ref_text.empty() ? "" : ",") + format_double(v);
    const fs::path out = dir / "cli.csv";
    const Exec e = run_cli("repaint --ckpt " + shared_model().string() + " --target " + format_double(target) +
                           " --reference " + ref_text + " --mask first-4/8 --n 4 --seed 9 --resample 3 --out " +
                           out.string());
    INFO(e.output);
    REQUIRE(e.status == 0);
    const json r = wait_result(cli, post_generate(cli, {{"model", bundle->name}, {"condition", target}, {"n", 4},
                                                        {"seed", 9}, {"mask_spec", "first-4/8"},
                                                        {"reference", reference}, {"resample_u", 3}}));
    const auto [header, rows] = read_numeric_csv(out);
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      const Vector http = r["designs"][i]["values"].get<Vector>();
      CHECK(Vector(rows[i].begin(), rows[i].begin() + static_cast<std::ptrdiff_t>(http.size())) == http);
    }
  }

  auto opt = cli.Options("/api/generate");
  REQUIRE(opt);
  CHECK(opt->status == 204);
  svc.stop();
}

TEST_CASE("CLI errors and zero-epoch training") {
  testing::ScratchDir dir("cli");
  const fs::path schema = shared_model().parent_path() / "d.csv.schema.json";
  const Exec missing = run_cli("train --dataset " + (dir / "nope.csv").string() + " --schema " + schema.string() +
                               " --out " + (dir / "m").string());
  CHECK(missing.status != 0);
  CHECK(missing.output.find("dataset not found") != std::string::npos);

  CHECK(run_cli("repaint --ckpt x --out y").status != 0);  // missing required options
  CHECK(run_cli("experiment not-a-name --ckpt x --out y").status != 0);

  std::ofstream(dir / "plan.json") << tiny_plan().dump();
  const Exec zero = run_cli("train --dataset " + (shared_model().parent_path() / "d.csv").string() + " --schema " +
                            schema.string() + " --config " + (dir / "plan.json").string() + " --epochs 0 --out " +
                            (dir / "m0").string());
  INFO(zero.output);
  CHECK(zero.status == 0);
  CHECK(is_bundle_dir(dir / "m0"));

  const Exec synth = run_cli("synth --n 10 --seed 1 --out " + (dir / "s.csv").string());
  CHECK(synth.status == 0);
  CHECK(synth.output.find("wrote") != std::string::npos);
  const Exec replay = run_cli("replay --manifest " + manifest_path_for(dir / "s.csv", false).string() +
                              " --out-dir " + (dir / "again").string());
  CHECK(replay.status == 0);
  CHECK(slurp(dir / "s.csv") == slurp(dir / "again" / "s.csv"));
}

TEST_CASE("experiment drivers on a tiny model") {
  const ModelBundle m = load_bundle(shared_model());
  ExperimentConfig cfg;
  cfg.n = 2;
  cfg.resample = 1;
  cfg.params = {0, 3};
  const ExperimentReport fix = run_experiment("fix-scan", m, cfg);
  CHECK(fix.table("fix_scan").rows.size() == 3);
  CHECK(fix.table("fix_scan").to_csv().rfind("fixed,name,value,", 0) == 0);
  CHECK_THROWS_AS(fix.table("nope"), IndexError);

  cfg.null_trials = 50;
  const ExperimentReport corr = run_experiment("correlation", m, cfg);
  CHECK(corr.table("correlation").rows.size() == 16);

  // The tiny model has no classifier, so the gamma factor cannot be varied.
  CHECK_THROWS_AS(run_experiment("doe", m, cfg), ConfigError);
  CHECK_THROWS_AS(run_experiment("nope", m, cfg), ConfigError);
  CHECK(ExperimentConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());

  testing::ScratchDir dir("reports");
  const auto written = fix.write(dir.path());
  CHECK(written.size() == 2);
  for (const auto& p : written) CHECK(fs::exists(p));
}
