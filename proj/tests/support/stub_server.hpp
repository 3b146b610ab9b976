#pragma once

// Recording completion endpoint for remote-backend tests.

#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace stub {

struct Recorded {
  nlohmann::json body;
  std::string authorization;
};

struct Reply {
  int status = 200;
  std::string body;
};

class CompletionServer {
 public:
  using Handler = std::function<Reply(const nlohmann::json& request, std::size_t call)>;

  explicit CompletionServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
      Recorded rec;
      rec.body = nlohmann::json::parse(req.body, nullptr, false);
      rec.authorization = req.get_header_value("Authorization");
      std::size_t call = 0;
      {
        std::lock_guard<std::mutex> lock(mu_);
        call = requests_.size();
        requests_.push_back(rec);
      }
      const Reply r = handler_(rec.body, call);
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~CompletionServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/generate";
  }

  std::vector<Recorded> requests() const {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::vector<Recorded> requests_;
};

inline Reply text_reply(const std::string& text) {
  return {200, nlohmann::json{{"text", text}}.dump()};
}

}  // namespace stub
