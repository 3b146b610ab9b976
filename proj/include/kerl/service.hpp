#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "kerl/benchgen.hpp"
#include "kerl/constraints.hpp"
#include "kerl/kg_store.hpp"
#include "kerl/pipeline.hpp"

namespace httplib {
class Server;
}

namespace kerl::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds an ephemeral port
  std::string corpus_path;
  kg::CorpusFormat corpus_format = kg::CorpusFormat::Jsonl;
  std::string templates_path;
  pipeline::BackendConfig remote;  // used when a request asks for "remote"
  std::size_t chunk_budget = 8000;
  std::string data_dir;

  /// Throws std::invalid_argument if a path is missing or the budget is 0.
  void validate() const;
};

enum class JobStatus { Queued, Running, Done, Failed };

std::string_view to_string(JobStatus s);

struct JobRecord {
  std::string id;
  std::string kind;  // "benchgen" | "eval"
  JobStatus status = JobStatus::Queued;
  std::string input_digest;
  std::string output_path;
  std::string error;
  double queued_at = 0.0;  // seconds since the epoch
  double started_at = 0.0;
  double finished_at = 0.0;
  bool reused = false;
};

nlohmann::json to_json(const JobRecord& job);

/// Builds a GenConfig from a request body; missing fields keep defaults.
benchgen::GenConfig gen_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const benchgen::GenConfig& cfg);

/// HTTP service over an immutable corpus. Benchmark and evaluation jobs run
/// one at a time on a background worker; their outputs are content-addressed
/// by input digest under the data directory.
class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

  const kg::KnowledgeGraph& graph() const { return graph_; }

  /// Submits (or reuses) a job; returns its record.
  JobRecord submit(const std::string& kind, const nlohmann::json& input);
  std::optional<JobRecord> job(const std::string& id) const;
  /// Blocks until the job leaves the queue/running states.
  JobRecord wait_for(const std::string& id) const;

 private:
  void install_routes();
  void worker_loop();
  void run_job(const std::string& id);
  std::string resolve_data_path(const std::string& path) const;

  ServiceConfig cfg_;
  kg::KnowledgeGraph graph_;
  constraints::TemplateCatalog catalog_;
  std::unique_ptr<pipeline::Recommender> recommender_;
  std::unique_ptr<pipeline::Backend> oracle_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, JobRecord> jobs_;
  std::map<std::string, nlohmann::json> inputs_;
  std::deque<std::string> queue_;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace kerl::service
