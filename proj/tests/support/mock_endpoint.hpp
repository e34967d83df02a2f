#pragma once

// In-process OpenAI-compatible completions endpoint for adapter tests.
// Binds to an ephemeral 127.0.0.1 port; the handler queue scripts one
// response (or transport behavior) per expected request, and every request
// body is kept for inspection.

#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

namespace mock {

class MockEndpoint {
public:
  struct Scripted {
    int status = 200;
    std::string text;                  // completion text for 200s
    std::string finish_reason = "stop";
    std::string raw_body;              // verbatim body when nonempty
  };

  MockEndpoint() {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      Scripted step;
      {
        std::lock_guard lock(mutex_);
        requests_.push_back(req.body);
        auth_headers_.push_back(req.get_header_value("Authorization"));
        if (script_index_ < script_.size()) {
          step = script_[script_index_++];
        } else {
          step.status = 500;
          step.raw_body = "mock: script exhausted";
        }
      }
      res.status = step.status;
      if (!step.raw_body.empty()) {
        res.set_content(step.raw_body, "application/json");
        return;
      }
      nlohmann::json body = {
          {"choices",
           nlohmann::json::array(
               {{{"text", step.text}, {"index", 0}, {"finish_reason", step.finish_reason}}})}};
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockEndpoint() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  void script(std::vector<Scripted> steps) {
    std::lock_guard lock(mutex_);
    script_ = std::move(steps);
    script_index_ = 0;
  }

  std::vector<nlohmann::json> request_bodies() {
    std::lock_guard lock(mutex_);
    std::vector<nlohmann::json> parsed;
    for (const auto& body : requests_) parsed.push_back(nlohmann::json::parse(body));
    return parsed;
  }

  std::size_t request_count() {
    std::lock_guard lock(mutex_);
    return requests_.size();
  }

  void reset_requests() {
    std::lock_guard lock(mutex_);
    requests_.clear();
    auth_headers_.clear();
  }

  std::vector<std::string> auth_headers() {
    std::lock_guard lock(mutex_);
    return auth_headers_;
  }

private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mutex_;
  std::vector<Scripted> script_;
  std::size_t script_index_ = 0;
  std::vector<std::string> requests_;
  std::vector<std::string> auth_headers_;
};

}  // namespace mock
