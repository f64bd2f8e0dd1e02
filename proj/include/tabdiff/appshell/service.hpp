#pragma once

// HTTP + JSON service used by the mask editor UI. Generation runs asynchronously
// on a worker pool; clients poll the job endpoints.

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tabdiff/appshell/bundle.hpp"
#include "tabdiff/appshell/generate.hpp"

namespace httplib {
class Server;
}

namespace tabdiff {

enum class JobState { Queued, Running, Done, Failed };
const char* to_string(JobState s);

struct JobRecord {
  std::string id;
  std::string model;
  JobState state = JobState::Queued;
  double progress = 0.0;
  std::string error;
  double seconds = 0.0;
  nlohmann::json result;  // set when done

  nlohmann::json to_json() const;  // without the result payload
};

/// Read-mostly model registry; insertion takes an exclusive lock.
class ModelRegistry {
 public:
  void add(std::shared_ptr<const ModelBundle> bundle);
  std::shared_ptr<const ModelBundle> find(const std::string& name) const;
  std::vector<std::shared_ptr<const ModelBundle>> list() const;
  /// Loads `dir` itself if it is a model directory, otherwise every model
  /// directory directly inside it. Returns the number loaded.
  std::size_t load_directory(const std::filesystem::path& dir);

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const ModelBundle>> models_;
};

nlohmann::json describe_model(const ModelBundle& bundle);

class Service {
 public:
  explicit Service(std::shared_ptr<ModelRegistry> registry, std::size_t workers = 1);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

  /// In-process job submission, same path as POST /api/generate.
  std::string submit(const std::string& model, const GenerateRequest& request);
  std::optional<JobRecord> job(const std::string& id) const;
  /// Blocks until the job is done or failed, or the timeout passes.
  bool wait(const std::string& id, double timeout_seconds) const;

 private:
  struct Task {
    std::string id;
    std::shared_ptr<const ModelBundle> bundle;
    GenerateRequest request;
  };

  void routes();
  void worker_loop();

  std::shared_ptr<ModelRegistry> registry_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;

  mutable std::mutex jobs_mutex_;
  mutable std::condition_variable jobs_changed_;
  std::map<std::string, JobRecord> jobs_;
  std::deque<Task> queue_;
  std::condition_variable queue_ready_;
  bool stopping_ = false;
  std::size_t next_job_ = 1;
  std::vector<std::thread> workers_;
};

}  // namespace tabdiff
