#include "kerl/service.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "kerl/evaluate.hpp"
#include "kerl/json_io.hpp"
#include "kerl/metrics.hpp"
#include "kerl/text.hpp"

namespace kerl::service {

namespace fs = std::filesystem;
using nlohmann::json;

void ServiceConfig::validate() const {
  if (!fs::exists(corpus_path)) {
    throw std::invalid_argument("corpus not found: " + corpus_path);
  }
  if (!fs::exists(templates_path)) {
    throw std::invalid_argument("template catalog not found: " + templates_path);
  }
  if (data_dir.empty()) throw std::invalid_argument("data directory not set");
  if (chunk_budget < 1) throw std::invalid_argument("chunk budget must be >= 1");
}

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Queued:
      return "queued";
    case JobStatus::Running:
      return "running";
    case JobStatus::Done:
      return "done";
    case JobStatus::Failed:
      return "failed";
  }
  return "?";
}

json to_json(const JobRecord& job) {
  json j = {{"id", job.id},
            {"kind", job.kind},
            {"status", std::string(to_string(job.status))},
            {"input_digest", job.input_digest},
            {"queued_at", job.queued_at},
            {"started_at", job.started_at},
            {"finished_at", job.finished_at},
            {"reused", job.reused}};
  if (!job.output_path.empty()) j["output_path"] = job.output_path;
  if (!job.error.empty()) j["error"] = job.error;
  return j;
}

benchgen::GenConfig gen_config_from_json(const json& j) {
  benchgen::GenConfig cfg;
  auto range = [&](const char* key, benchgen::CountRange& r) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<int>>();
    if (v.size() != 2) throw benchgen::GenerationError(std::string(key) + " must be [lo, hi]");
    r = {v[0], v[1]};
  };
  try {
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("tags")) cfg.tags = j.at("tags").get<std::vector<std::string>>();
    cfg.n_questions_per_tag = j.value("n_questions_per_tag", cfg.n_questions_per_tag);
    range("include_count", cfg.include_count);
    range("exclude_count", cfg.exclude_count);
    range("nutrient_constraint_count", cfg.nutrient_constraint_count);
    cfg.k_train = j.value("k_train", cfg.k_train);
    if (j.contains("split_fractions")) {
      const auto f = j.at("split_fractions").get<std::vector<double>>();
      if (f.size() != 3) throw benchgen::GenerationError("split_fractions needs 3 values");
      cfg.split_fractions = {f[0], f[1], f[2]};
    }
    cfg.max_resample_attempts = j.value("max_resample_attempts", cfg.max_resample_attempts);
    if (j.contains("nutrients")) cfg.nutrients = j.at("nutrients").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw benchgen::GenerationError(std::string("malformed generation config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json to_json(const benchgen::GenConfig& cfg) {
  return {{"seed", cfg.seed},
          {"tags", cfg.tags},
          {"n_questions_per_tag", cfg.n_questions_per_tag},
          {"include_count", {cfg.include_count.lo, cfg.include_count.hi}},
          {"exclude_count", {cfg.exclude_count.lo, cfg.exclude_count.hi}},
          {"nutrient_constraint_count",
           {cfg.nutrient_constraint_count.lo, cfg.nutrient_constraint_count.hi}},
          {"k_train", cfg.k_train},
          {"split_fractions", cfg.split_fractions},
          {"max_resample_attempts", cfg.max_resample_attempts},
          {"nutrients", cfg.nutrients}};
}

namespace {

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message, std::optional<std::pair<std::size_t, std::size_t>> span = {}) {
  json body = {{"code", code}, {"message", message}};
  if (span) body["span"] = {{"begin", span->first}, {"end", span->second}};
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string marker_for(const std::string& kind) {
  return kind == "benchgen" ? "stats.json" : "report.json";
}

}  // namespace

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  graph_ = kg::ingest_file(cfg_.corpus_path, cfg_.corpus_format).graph;
  catalog_ = constraints::load_catalog(cfg_.templates_path);
  recommender_ = std::make_unique<pipeline::Recommender>(graph_, catalog_);
  oracle_ = pipeline::oracle_backend(graph_, catalog_);
  fs::create_directories(cfg_.data_dir);
  server_ = std::make_unique<httplib::Server>();
  install_routes();
  worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

int Service::start() {
  int port = cfg_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(cfg_.host);
  } else if (!server_->bind_to_port(cfg_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw std::runtime_error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  }
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::wait() {
  if (server_thread_.joinable()) server_thread_.join();
}

void Service::stop() {
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

std::string Service::resolve_data_path(const std::string& path) const {
  const fs::path root = fs::weakly_canonical(cfg_.data_dir);
  fs::path p = path;
  if (p.is_relative()) p = root / p;
  p = fs::weakly_canonical(p);
  auto [r, _] = std::mismatch(root.begin(), root.end(), p.begin(), p.end());
  if (r != root.end()) {
    throw std::invalid_argument("path '" + path + "' is outside the data directory");
  }
  return p.string();
}

JobRecord Service::submit(const std::string& kind, const json& input) {
  std::string digest_input = kind + "\n" + cfg_.corpus_path + "\n" + input.dump();
  if (kind == "eval") {
    digest_input += "\n" + text::sha256_hex(read_file(input.at("dataset").get<std::string>()));
  } else if (kind != "benchgen") {
    throw std::invalid_argument("unknown job kind '" + kind + "'");
  }
  const std::string digest = text::sha256_hex(digest_input);
  const std::string id = kind + "-" + digest.substr(0, 16);
  const std::string out_dir = (fs::path(cfg_.data_dir) / id).string();

  std::lock_guard lock(mu_);
  if (auto it = jobs_.find(id); it != jobs_.end() && it->second.status != JobStatus::Failed) {
    JobRecord copy = it->second;
    copy.reused = true;
    return copy;
  }
  JobRecord job;
  job.id = id;
  job.kind = kind;
  job.input_digest = digest;
  job.queued_at = now_seconds();
  if (fs::exists(fs::path(out_dir) / marker_for(kind))) {
    job.status = JobStatus::Done;
    job.output_path = out_dir;
    job.started_at = job.finished_at = job.queued_at;
    job.reused = true;
    jobs_[id] = job;
    return job;
  }
  jobs_[id] = job;
  inputs_[id] = input;
  queue_.push_back(id);
  cv_.notify_all();
  return job;
}

std::optional<JobRecord> Service::job(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

JobRecord Service::wait_for(const std::string& id) const {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] {
    auto it = jobs_.find(id);
    return it == jobs_.end() || it->second.status == JobStatus::Done ||
           it->second.status == JobStatus::Failed;
  });
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw std::invalid_argument("unknown job '" + id + "'");
  return it->second;
}

void Service::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      jobs_[id].status = JobStatus::Running;
      jobs_[id].started_at = now_seconds();
    }
    run_job(id);
  }
}

void Service::run_job(const std::string& id) {
  json input;
  std::string kind;
  {
    std::lock_guard lock(mu_);
    input = inputs_.at(id);
    kind = jobs_.at(id).kind;
  }
  const std::string out_dir = (fs::path(cfg_.data_dir) / id).string();
  std::string error;
  try {
    if (kind == "benchgen") {
      const auto gen = gen_config_from_json(input.value("config", json::object()));
      const auto ds = benchgen::generate_dataset(graph_, catalog_, gen);
      json_io::write_dataset(out_dir, ds);
    } else {
      const auto items = json_io::read_items(input.at("dataset").get<std::string>());
      evaluate::KgqaOptions opts;
      opts.recommend.chunk_budget = input.value("chunk_budget", cfg_.chunk_budget);
      std::unique_ptr<pipeline::Backend> remote;
      pipeline::Backend* backend = oracle_.get();
      if (input.value("backend", std::string("oracle")) == "remote") {
        remote = pipeline::remote_backend(cfg_.remote);
        backend = remote.get();
        opts.recommend.parallelism = cfg_.remote.parallelism;
      }
      const auto report = evaluate::evaluate_kgqa(items, *recommender_, *backend, opts);
      fs::create_directories(out_dir);
      std::ofstream(fs::path(out_dir) / "report.csv", std::ios::binary)
          << metrics::report_to_csv(report);
      std::ofstream(fs::path(out_dir) / "report.json", std::ios::binary)
          << metrics::report_to_json(report) << '\n';
    }
  } catch (const std::exception& e) {
    error = e.what();
  }
  {
    std::lock_guard lock(mu_);
    auto& job = jobs_.at(id);
    job.finished_at = now_seconds();
    if (error.empty()) {
      job.status = JobStatus::Done;
      job.output_path = out_dir;
    } else {
      job.status = JobStatus::Failed;
      job.error = error;
    }
  }
  cv_.notify_all();
}

void Service::install_routes() {
  auto& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  srv.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"},
                    {"recipes", graph_.size()},
                    {"tags", graph_.tag_index().size()}});
  });

  srv.Get("/tags", [this](const httplib::Request&, httplib::Response& res) {
    json tags = json::array();
    for (const auto& [tag, ids] : graph_.tag_index()) {
      tags.push_back({{"tag", tag}, {"recipes", ids.size()}});
    }
    send_json(res, {{"tags", tags}});
  });

  srv.Get("/ingredients", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("tag")) {
      send_error(res, 400, "bad_request", "missing 'tag' parameter");
      return;
    }
    const auto tag = text::canonical_name(req.get_param_value("tag"));
    const auto vocab = kg::ingredient_vocabulary(graph_, tag);
    send_json(res, {{"tag", tag}, {"ingredients", std::vector<std::string>(vocab.begin(), vocab.end())}});
  });

  srv.Get(R"(/recipes/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto* r = graph_.find(req.matches[1].str());
    if (!r) {
      send_error(res, 404, "not_found", "no recipe with id '" + req.matches[1].str() + "'");
      return;
    }
    send_json(res, json_io::to_json(*r));
  });

  srv.Post("/query", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      send_error(res, 400, "bad_request", std::string("invalid JSON: ") + e.what());
      return;
    }
    pipeline::RecommendConfig rc;
    rc.chunk_budget = cfg_.chunk_budget;
    std::unique_ptr<pipeline::Backend> remote;
    pipeline::Backend* backend = oracle_.get();
    try {
      rc.chunk_budget = body.value("chunk_budget", cfg_.chunk_budget);
      const auto which = body.value("backend", std::string("oracle"));
      if (which == "remote") {
        remote = pipeline::remote_backend(cfg_.remote);
        backend = remote.get();
        rc.parallelism = cfg_.remote.parallelism;
      } else if (which != "oracle") {
        send_error(res, 400, "bad_request", "backend must be 'oracle' or 'remote'");
        return;
      }
      if (rc.chunk_budget < 1) throw std::invalid_argument("chunk_budget must be >= 1");
    } catch (const std::exception& e) {
      send_error(res, 400, "bad_request", e.what());
      return;
    }

    try {
      pipeline::RecommendationResult result;
      if (body.contains("query")) {
        result = recommender_->recommend(json_io::query_from_json(body["query"]), *backend, rc);
      } else if (body.contains("question") && body["question"].is_string()) {
        result = recommender_->recommend(body["question"].get<std::string>(), *backend, rc);
      } else {
        send_error(res, 400, "bad_request", "body needs 'question' or 'query'");
        return;
      }
      send_json(res, json_io::to_json(result));
    } catch (const constraints::QuestionParseError& e) {
      send_error(res, 422, "parse_error", e.what(), std::make_pair(e.span_begin(), e.span_end()));
    } catch (const constraints::InvalidQuery& e) {
      send_error(res, 422, "invalid_query", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });

  srv.Post("/benchmark/generate", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto body = req.body.empty() ? json::object() : json::parse(req.body);
      const auto gen = gen_config_from_json(body.value("config", json::object()));
      const auto job = submit("benchgen", {{"config", to_json(gen)}});
      send_json(res, to_json(job), 202);
    } catch (const std::exception& e) {
      send_error(res, 400, "bad_request", e.what());
    }
  });

  srv.Post("/evaluate", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto body = json::parse(req.body);
      json input = {{"dataset", resolve_data_path(body.at("dataset").get<std::string>())},
                    {"backend", body.value("backend", std::string("oracle"))},
                    {"chunk_budget", body.value("chunk_budget", cfg_.chunk_budget)}};
      if (!fs::exists(input["dataset"].get<std::string>())) {
        send_error(res, 404, "not_found", "dataset not found");
        return;
      }
      send_json(res, to_json(submit("eval", input)), 202);
    } catch (const std::exception& e) {
      send_error(res, 400, "bad_request", e.what());
    }
  });

  srv.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto j = job(req.matches[1].str());
    if (!j) {
      send_error(res, 404, "not_found", "no job '" + req.matches[1].str() + "'");
      return;
    }
    send_json(res, to_json(*j));
  });
}

}  // namespace kerl::service
