#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "cardbench/error.hpp"
#include "cardbench/inference.hpp"

namespace cardbench {

struct RemoteConfig {
  std::string base_url;                    // scheme://host:port
  std::string path = "/v1/chat/completions";
  std::string model;
  double timeout_seconds = 30.0;
  int max_in_flight = 4;
  int max_retries = 3;
  double backoff_base_seconds = 0.25;      // doubled per retry
  std::string api_key_env = "CARDBENCH_API_KEY";
};

namespace remote_detail {

class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : limit_(limit < 1 ? 1 : limit) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }
  void release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      --active_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int active_ = 0;
};

inline std::string next_request_id() {
  static std::atomic<uint64_t> counter{0};
  return "req-" + std::to_string(counter.fetch_add(1) + 1);
}

}  // namespace remote_detail

// One chat-completion round trip: POSTs the serialized prompt as a role-tagged
// message list and returns the first choice's text verbatim. Transient
// failures (connect/timeout/5xx) are retried with exponential backoff; an
// estimate is never invented on failure.
inline std::string remote_complete(const RemoteConfig& cfg, const std::string& prompt_text,
                                   const CompletionOptions& opts = {}) {
  std::string request_id = remote_detail::next_request_id();
  nlohmann::json body;
  body["model"] = cfg.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt_text}}});
  if (opts.sampled) {
    body["temperature"] = opts.temperature;
    body["seed"] = opts.seed;
  }
  const std::string payload = body.dump();

  const char* key = cfg.api_key_env.empty() ? nullptr : std::getenv(cfg.api_key_env.c_str());

  std::string last_error = "no attempt made";
  TransportError::Kind last_kind = TransportError::Kind::Connection;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      auto delay = std::chrono::duration<double>(cfg.backoff_base_seconds * (1 << (attempt - 1)));
      std::this_thread::sleep_for(delay);
    }
    httplib::Client client(cfg.base_url);
    client.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_seconds));
    client.set_read_timeout(std::chrono::duration<double>(cfg.timeout_seconds));
    client.set_write_timeout(std::chrono::duration<double>(cfg.timeout_seconds));
    httplib::Headers headers{{"X-Request-Id", request_id}};
    if (key) headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = client.Post(cfg.path, headers, payload, "application/json");
    if (!res) {
      auto err = res.error();
      bool timeout = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                     err == httplib::Error::Write;
      last_kind = timeout ? TransportError::Kind::Timeout : TransportError::Kind::Connection;
      last_error = std::string(timeout ? "request timed out" : "connection failed") + " (" +
                   request_id + ")";
      continue;  // transient, retry
    }
    if (res->status >= 500) {
      last_kind = TransportError::Kind::HttpStatus;
      last_error = "server returned HTTP " + std::to_string(res->status) + " (" + request_id + ")";
      continue;  // transient, retry
    }
    if (res->status < 200 || res->status >= 300)
      throw TransportError(TransportError::Kind::HttpStatus,
                           "server returned HTTP " + std::to_string(res->status) + " (" +
                               request_id + ")");
    try {
      nlohmann::json j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(TransportError::Kind::MalformedBody,
                           std::string("malformed response body: ") + e.what() + " (" +
                               request_id + ")");
    }
  }
  throw TransportError(last_kind, last_error + " after " + std::to_string(cfg.max_retries + 1) +
                                      " attempts");
}

class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig cfg)
      : cfg_(std::move(cfg)), limiter_(cfg_.max_in_flight) {}

  std::string complete(const std::string& prompt_text, const CompletionOptions& opts) override {
    limiter_.acquire();
    struct Release {
      remote_detail::InFlightLimiter& l;
      ~Release() { l.release(); }
    } release{limiter_};
    return remote_complete(cfg_, prompt_text, opts);
  }

  bool supports_seeded_sampling() const override { return false; }
  bool is_deterministic() const override { return false; }
  std::string source_tag() const override { return kSourceRemote; }

  const RemoteConfig& config() const { return cfg_; }

 private:
  RemoteConfig cfg_;
  remote_detail::InFlightLimiter limiter_;
};

}  // namespace cardbench
