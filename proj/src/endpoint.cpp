#include "parabreak/endpoint.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace parabreak::providers {

using nlohmann::json;

TokenManifest load_token_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingTokenManifest, "cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedFile, path + ": " + e.what());
  }
  TokenManifest manifest;
  try {
    manifest.vocab_size = doc.at("vocab_size").get<int>();
    manifest.newline_token_ids = doc.at("newline_token_ids").get<std::vector<int>>();
    manifest.period_suffix_token_ids =
        doc.value("period_suffix_token_ids", std::vector<int>{});
    manifest.break_sequence_ids = doc.value("break_sequence_ids", std::vector<int>{});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedFile, path + ": " + e.what());
  }
  return manifest;
}

class EndpointAdapter::InflightGuard {
public:
  explicit InflightGuard(EndpointAdapter& adapter) : adapter_(adapter) {
    std::unique_lock lock(adapter_.inflight_mutex_);
    adapter_.inflight_cv_.wait(
        lock, [&] { return adapter_.inflight_ < adapter_.config_.max_inflight; });
    ++adapter_.inflight_;
  }
  ~InflightGuard() {
    {
      std::lock_guard lock(adapter_.inflight_mutex_);
      --adapter_.inflight_;
    }
    adapter_.inflight_cv_.notify_one();
  }

private:
  EndpointAdapter& adapter_;
};

EndpointAdapter::EndpointAdapter(EndpointConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    throw Error(ErrorKind::InvalidConfig, "endpoint base_url must be set");
  }
  if (config_.max_inflight < 1) {
    throw Error(ErrorKind::InvalidConfig, "max_inflight must be >= 1");
  }
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
}

namespace {

double clamp_bias(double bias) {
  return std::clamp(bias, -100.0, 100.0);
}

bool mentions_token_limit(const std::string& body) {
  return body.find("context length") != std::string::npos ||
         body.find("maximum context") != std::string::npos ||
         body.find("token limit") != std::string::npos;
}

}  // namespace

EndpointAdapter::CompletionResult EndpointAdapter::complete(
    const std::string& prompt, int max_tokens, double temperature, double top_p,
    const std::map<int, double>& logit_bias) {
  InflightGuard guard(*this);

  json request;
  request["model"] = config_.model_name;
  request["prompt"] = prompt;
  request["max_tokens"] = max_tokens;
  request["temperature"] = temperature;
  request["top_p"] = top_p;
  request["echo"] = false;
  if (!logit_bias.empty()) {
    json bias = json::object();
    for (const auto& [id, value] : logit_bias) {
      bias[std::to_string(id)] = clamp_bias(value);
    }
    request["logit_bias"] = std::move(bias);
  }
  const std::string body = request.dump();

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_failure = "no request issued";
  bool transport_failure = false;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      total_retries_.fetch_add(1);
      int delay = config_.backoff_base_ms << (attempt - 1);
      delay = std::min(delay, config_.backoff_cap_ms);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(0, config_.timeout_ms * 1000LL);
    client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
    auto res = client.Post("/v1/completions", headers, body, "application/json");

    if (!res) {
      transport_failure = true;
      last_failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      transport_failure = false;
      last_failure = "status " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    if (res->status != 200) {
      if (mentions_token_limit(res->body)) {
        throw Error(ErrorKind::TokenLimitExceeded, res->body);
      }
      throw Error(ErrorKind::EndpointError,
                  "status " + std::to_string(res->status) + ": " + res->body);
    }

    try {
      json doc = json::parse(res->body);
      const auto& choice = doc.at("choices").at(0);
      CompletionResult result;
      result.text = choice.at("text").get<std::string>();
      result.finish_reason = choice.value("finish_reason", "stop");
      return result;
    } catch (const json::exception& e) {
      throw Error(ErrorKind::EndpointError, std::string("unparseable response: ") + e.what());
    }
  }
  if (transport_failure) {
    throw Error(ErrorKind::NetworkError, last_failure + " (after " +
                                             std::to_string(config_.max_retries) + " retries)");
  }
  throw Error(ErrorKind::EndpointError, last_failure + " (after " +
                                            std::to_string(config_.max_retries) + " retries)");
}

std::map<int, double> build_bias_payload(const decode::NewlinePenalty& penalty,
                                         const EndpointAdapter& adapter) {
  std::vector<int> targets;
  if (penalty.target_ids) {
    targets = *penalty.target_ids;
  } else {
    if (!adapter.manifest()) {
      throw Error(ErrorKind::MissingTokenManifest,
                  "newline token ids require a tokenizer manifest");
    }
    targets = adapter.manifest()->newline_token_ids;
  }
  const double bias = std::isinf(penalty.lambda) ? -100.0 : -std::min(penalty.lambda, 100.0);
  std::map<int, double> payload;
  for (int id : targets) payload[id] = bias;
  return payload;
}

namespace {

decode::DecodeTrace remote_single_shot(EndpointAdapter& adapter, std::string_view prompt,
                                       const decode::DecodeConfig& config, double temperature,
                                       double top_p, const std::map<int, double>& bias) {
  auto result = adapter.complete(std::string(prompt), config.max_new_tokens, temperature, top_p, bias);
  decode::DecodeTrace trace;
  trace.text = result.text;
  trace.finish_reason = result.finish_reason == "length" ? decode::FinishReason::length
                                                         : decode::FinishReason::eos;
  return trace;
}

decode::DecodeTrace remote_step_mode(EndpointAdapter& adapter, std::string_view prompt,
                                     const decode::DecodeConfig& config, double temperature,
                                     double top_p, const std::map<int, double>& bias) {
  auto injections = config.injections;
  decode::DecodeTrace trace;
  trace.finish_reason = decode::FinishReason::length;
  std::string generated;
  for (int step = 0; step < config.max_new_tokens; ++step) {
    auto result = adapter.complete(std::string(prompt) + generated, 1, temperature, top_p, bias);
    if (result.text.empty() && result.finish_reason != "length") {
      trace.finish_reason = decode::FinishReason::eos;
      break;
    }
    generated += result.text;
    trace.steps.push_back({-1, 0.0f, 0.0f, false});
    if (result.text.ends_with('.')) {
      for (auto& attack : injections) {
        if (attack.fired) continue;
        attack.periods_seen += 1;
        if (attack.periods_seen == attack.k) {
          attack.fired = true;
          generated += "\n\n";
          trace.steps.push_back({-1, 0.0f, 0.0f, true});
        }
      }
    }
    if (result.finish_reason == "stop") {
      trace.finish_reason = decode::FinishReason::eos;
      break;
    }
  }
  trace.text = std::move(generated);
  return trace;
}

}  // namespace

decode::DecodeTrace remote_generate(EndpointAdapter& adapter, std::string_view prompt,
                                    const decode::DecodeConfig& config) {
  if (config.strategy == decode::Strategy::beam) {
    throw Error(ErrorKind::InvalidConfig, "remote endpoints support greedy and sample only");
  }
  config.validate();

  const bool sampling = config.strategy == decode::Strategy::sample;
  const double temperature = sampling ? *config.temperature : 0.0;
  const double top_p = sampling ? *config.top_p : 1.0;

  std::map<int, double> bias = adapter.config().base_bias;
  for (const auto& penalty : config.transforms) {
    for (const auto& [id, value] : build_bias_payload(penalty, adapter)) {
      bias[id] = value;
    }
  }

  if (config.injections.empty()) {
    return remote_single_shot(adapter, prompt, config, temperature, top_p, bias);
  }
  return remote_step_mode(adapter, prompt, config, temperature, top_p, bias);
}

}  // namespace parabreak::providers
