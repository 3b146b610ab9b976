#include <chrono>
#include <cmath>

#include <httplib.h>
#include <json.hpp>

#include "kerl/pipeline.hpp"
#include "kerl/text.hpp"

namespace kerl::pipeline {

namespace {

struct Endpoint {
  std::string host;
  int port = 80;
  std::string path = "/";
};

Endpoint parse_endpoint(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (!text::starts_with(url, kScheme)) {
    throw std::invalid_argument("remote endpoint must be an http:// URL: " + url);
  }
  std::string_view rest = std::string_view(url).substr(kScheme.size());
  Endpoint ep;
  const auto slash = rest.find('/');
  std::string_view authority = rest.substr(0, slash);
  if (slash != std::string_view::npos) ep.path = std::string(rest.substr(slash));
  const auto colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    auto port = text::parse_number(authority.substr(colon + 1));
    if (!port || *port < 1 || *port > 65535 || std::floor(*port) != *port) {
      throw std::invalid_argument("bad port in remote endpoint: " + url);
    }
    ep.port = static_cast<int>(*port);
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) throw std::invalid_argument("remote endpoint has no host: " + url);
  ep.host = std::string(authority);
  return ep;
}

class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(BackendConfig cfg) : cfg_(std::move(cfg)), ep_(parse_endpoint(cfg_.endpoint)) {}

  GenerationResult generate(const std::string& prompt, std::size_t chunk_index) override {
    nlohmann::json body = {{"prompt", prompt},
                           {"temperature", cfg_.temperature},
                           {"max_tokens", cfg_.max_new_tokens},
                           {"num_beams", cfg_.num_beams},
                           {"want_logprobs", cfg_.want_logprobs}};
    httplib::Client client(ep_.host, ep_.port);
    const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!cfg_.auth_token.empty()) {
      headers.emplace("Authorization", "Bearer " + cfg_.auth_token);
    }

    const auto t0 = std::chrono::steady_clock::now();
    auto res = client.Post(ep_.path, headers, body.dump(), "application/json");
    const double latency =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (!res) {
      throw BackendError(chunk_index, "transport error: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendError(chunk_index, "backend returned HTTP " + std::to_string(res->status));
    }

    GenerationResult out;
    out.latency_ms = latency;
    try {
      const auto j = nlohmann::json::parse(res->body);
      out.text = j.at("text").get<std::string>();
      if (j.contains("logprobs") && !j["logprobs"].is_null()) {
        std::vector<std::pair<std::string, double>> lp;
        for (const auto& e : j["logprobs"]) {
          std::pair<std::string, double> entry;
          if (e.is_number()) {
            entry.second = e.get<double>();
          } else if (e.is_array() && e.size() == 2) {
            entry = {e[0].get<std::string>(), e[1].get<double>()};
          } else {
            entry = {e.value("token", std::string()), e.at("logprob").get<double>()};
          }
          if (!std::isfinite(entry.second) || entry.second > 0.0) {
            throw BackendError(chunk_index, "backend returned an invalid log-probability");
          }
          lp.push_back(std::move(entry));
        }
        out.token_logprobs = std::move(lp);
      }
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(chunk_index, std::string("malformed backend response: ") + e.what());
    }
    return out;
  }

 private:
  BackendConfig cfg_;
  Endpoint ep_;
};

}  // namespace

std::unique_ptr<Backend> remote_backend(const BackendConfig& cfg) {
  cfg.validate();
  return std::make_unique<RemoteBackend>(cfg);
}

}  // namespace kerl::pipeline
