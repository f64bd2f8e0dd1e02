#include "tabdiff/appshell/service.hpp"

#include <chrono>

#include <httplib.h>

#include "tabdiff/evalkit.hpp"
#include "tabdiff/mask.hpp"

namespace tabdiff {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "unknown";
}

json JobRecord::to_json() const {
  json j = {{"id", id}, {"model", model}, {"state", tabdiff::to_string(state)}, {"progress", progress}};
  if (state == JobState::Done || state == JobState::Failed) j["seconds"] = seconds;
  if (state == JobState::Done) j["result"] = "/api/jobs/" + id + "/result";
  if (state == JobState::Failed) j["error"] = error;
  return j;
}

void ModelRegistry::add(std::shared_ptr<const ModelBundle> bundle) {
  std::unique_lock lock(mutex_);
  models_[bundle->name] = std::move(bundle);
}

std::shared_ptr<const ModelBundle> ModelRegistry::find(const std::string& name) const {
  std::shared_lock lock(mutex_);
  auto it = models_.find(name);
  return it == models_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<const ModelBundle>> ModelRegistry::list() const {
  std::shared_lock lock(mutex_);
  std::vector<std::shared_ptr<const ModelBundle>> out;
  for (const auto& [k, v] : models_) out.push_back(v);
  return out;
}

std::size_t ModelRegistry::load_directory(const fs::path& dir) {
  std::vector<fs::path> dirs;
  if (is_bundle_dir(dir)) {
    dirs.push_back(dir);
  } else {
    if (!fs::is_directory(dir)) throw Error("model directory not found: " + dir.string());
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && is_bundle_dir(e.path())) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
  }
  for (const auto& d : dirs) add(std::make_shared<const ModelBundle>(load_bundle(d)));
  return dirs.size();
}

json describe_model(const ModelBundle& b) {
  json bounds = json::array();
  for (const auto& [lo, hi] : b.schema.bounds) bounds.push_back({lo, hi});
  json j = {{"name", b.name},
            {"problem", b.problem},
            {"kind", b.schema.kind},
            {"dim", b.schema.dim()},
            {"names", b.schema.names},
            {"bounds", bounds},
            {"environment", b.schema.environment},
            {"steps", b.model.schedule.steps},
            {"has_classifier", b.classifier.has_value()},
            {"has_predictor", b.predictor.has_value()},
            {"mask_grammar", kMaskGrammar}};
  if (b.training.size() > 0) {
    j["default_target"] = b.default_target();
    j["default_reference"] = b.default_reference();
  }
  if (b.schema.dim() >= 44) {
    json comps = json::array();
    for (const auto& c : hull_components()) comps.push_back({{"name", c.name}, {"first", c.first}, {"last", c.last}});
    j["components"] = comps;
  }
  return j;
}

Service::Service(std::shared_ptr<ModelRegistry> registry, std::size_t workers)
    : registry_(std::move(registry)), server_(std::make_unique<httplib::Server>()) {
  routes();
  for (std::size_t i = 0; i < std::max<std::size_t>(workers, 1); ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(jobs_mutex_);
    stopping_ = true;
  }
  queue_ready_.notify_all();
  for (auto& w : workers_) w.join();
}

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void Service::listen(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  if (server_->is_running()) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

std::string Service::submit(const std::string& model, const GenerateRequest& request) {
  auto bundle = registry_->find(model);
  if (!bundle) throw IndexError("unknown model '" + model + "'");
  mask_from_spec(bundle->schema.dim(), request.mask_spec);  // reject bad specs before queueing
  std::lock_guard lock(jobs_mutex_);
  const std::string id = "job-" + std::to_string(next_job_++);
  JobRecord rec;
  rec.id = id;
  rec.model = model;
  jobs_[id] = rec;
  queue_.push_back(Task{id, std::move(bundle), request});
  queue_ready_.notify_one();
  return id;
}

std::optional<JobRecord> Service::job(const std::string& id) const {
  std::lock_guard lock(jobs_mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

bool Service::wait(const std::string& id, double timeout_seconds) const {
  std::unique_lock lock(jobs_mutex_);
  return jobs_changed_.wait_for(lock, std::chrono::duration<double>(timeout_seconds), [&] {
    auto it = jobs_.find(id);
    return it == jobs_.end() || it->second.state == JobState::Done || it->second.state == JobState::Failed;
  });
}

void Service::worker_loop() {
  for (;;) {
    Task task;
    {
      std::unique_lock lock(jobs_mutex_);
      queue_ready_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_ && queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
      jobs_[task.id].state = JobState::Running;
    }
    jobs_changed_.notify_all();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const GenerateResult res = run_generate(*task.bundle, task.request, [&](double p) {
        std::lock_guard lock(jobs_mutex_);
        jobs_[task.id].progress = p;
      });
      json payload = result_payload(*task.bundle, res);
      std::lock_guard lock(jobs_mutex_);
      JobRecord& r = jobs_[task.id];
      r.result = std::move(payload);
      r.progress = 1.0;
      r.state = JobState::Done;
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } catch (const std::exception& e) {
      std::lock_guard lock(jobs_mutex_);
      JobRecord& r = jobs_[task.id];
      r.state = JobState::Failed;
      r.error = e.what();
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    jobs_changed_.notify_all();
  }
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::vector<Vector> vectors_from(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(what) + " must be a nonempty array of vectors");
  std::vector<Vector> out;
  for (const auto& row : j) out.push_back(row.get<Vector>());
  return out;
}

}  // namespace

void Service::routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  s.Get("/api/models", [this](const httplib::Request&, httplib::Response& res) {
    json models = json::array();
    for (const auto& b : registry_->list()) models.push_back(describe_model(*b));
    reply(res, 200, {{"models", models}});
  });

  s.Post("/api/generate", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      return reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
    }
    const std::string model = body.value("model", "");
    auto bundle = registry_->find(model);
    if (!bundle) return reply(res, 404, {{"error", "unknown model '" + model + "'"}});
    try {
      const GenerateRequest gr = GenerateRequest::from_json(body);
      const Mask mask = mask_from_spec(bundle->schema.dim(), gr.mask_spec);
      if (mask.any() && !gr.reference) return reply(res, 400, {{"error", "a mask needs a reference design"}});
      if (gr.reference && gr.reference->size() != bundle->schema.dim())
        return reply(res, 400, {{"error", "reference length does not match the model"}});
      const std::string id = submit(model, gr);
      reply(res, 202, {{"job_id", id}, {"state", "queued"},
                       {"mask", {{"spec", mask_to_spec(mask)}, {"bits", mask.bits}}}});
    } catch (const SpecError& e) {
      reply(res, 422, {{"error", e.what()}, {"grammar", kMaskGrammar}});
    } catch (const std::exception& e) {
      reply(res, 400, {{"error", e.what()}});
    }
  });

  s.Get(R"(/api/jobs/([A-Za-z0-9\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto rec = job(req.matches[1]);
    if (!rec) return reply(res, 404, {{"error", "unknown job"}});
    reply(res, 200, rec->to_json());
  });

  s.Get(R"(/api/jobs/([A-Za-z0-9\-]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto rec = job(req.matches[1]);
    if (!rec) return reply(res, 404, {{"error", "unknown job"}});
    if (rec->state != JobState::Done) {
      json body = {{"error", "job is not done"}, {"state", to_string(rec->state)}};
      if (rec->state == JobState::Failed) body["detail"] = rec->error;
      return reply(res, 409, body);
    }
    reply(res, 200, rec->result);
  });

  s.Post("/api/evaluate", [](const httplib::Request& req, httplib::Response& res) {
    try {
      const json body = json::parse(req.body);
      std::vector<std::string> metrics = body.value("metrics", std::vector<std::string>{"mmd"});
      json out = json::object();
      for (const auto& m : metrics) {
        if (m == "mape") {
          const double target = body.at("target").get<double>();
          if (!body.contains("values")) return reply(res, 400, {{"error", "mape needs 'values' and 'target'"}});
          const auto values = body["values"].get<std::vector<double>>();
          out["mape"] = {{"target", target}, {"n", values.size()}, {"mape_pct", mape(values, target)}};
        } else if (m == "mmd" || m == "prd") {
          const auto a = vectors_from(body.at("set_a"), "set_a");
          const auto b = vectors_from(body.at("set_b"), "set_b");
          if (m == "mmd") {
            std::optional<double> bw;
            if (body.contains("bandwidth")) bw = body["bandwidth"].get<double>();
            out["mmd"] = to_json(mmd_rbf(a, b, bw));
          } else {
            out["prd"] = to_json(prd(a, b, body.value("clusters", std::size_t{20}), body.value("grid", std::size_t{1001}),
                                     body.value("seed", std::uint64_t{0})));
          }
        } else {
          return reply(res, 400, {{"error", "unknown metric '" + m + "'"}});
        }
      }
      reply(res, 200, out);
    } catch (const std::exception& e) {
      reply(res, 400, {{"error", e.what()}});
    }
  });
}

}  // namespace tabdiff
