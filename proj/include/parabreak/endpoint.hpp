#pragma once

/**
 * Networked adapter for OpenAI-compatible completion endpoints.
 *
 * The newline penalty travels as the protocol's logit_bias map, clamped to
 * [-100, 100]; -100 is strong suppression, not the exact masking the local
 * engine guarantees. Plain runs issue a single completion request. Runs
 * with a paragraph-break attack fall back to step mode (one token per
 * request) so the period counter and the injected "\n\n" can operate on the
 * growing context; the trace is stitched locally.
 *
 * The adapter is shareable across threads; in-flight requests are bounded
 * and failed requests retry with bounded exponential backoff.
 */

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "parabreak/decode.hpp"

namespace parabreak::providers {

struct TokenManifest {
  int vocab_size = 0;
  std::vector<int> newline_token_ids;
  std::vector<int> period_suffix_token_ids;
  std::vector<int> break_sequence_ids;
};

TokenManifest load_token_manifest(const std::string& path);

struct EndpointConfig {
  std::string base_url;            // e.g. "http://127.0.0.1:8080"
  std::string model_name;
  std::string api_key_env = "OPENAI_API_KEY";  // key read from the environment, never stored
  int timeout_ms = 30000;
  int max_retries = 3;
  int backoff_base_ms = 200;       // doubles per retry, capped below
  int backoff_cap_ms = 5000;
  int max_inflight = 4;
  std::optional<TokenManifest> manifest;
  std::map<int, double> base_bias;  // applied to every request, clamped on send
};

class EndpointAdapter {
public:
  explicit EndpointAdapter(EndpointConfig config);

  const EndpointConfig& config() const { return config_; }
  const std::optional<TokenManifest>& manifest() const { return config_.manifest; }

  // Total failed-then-retried requests since construction.
  int total_retries() const { return total_retries_.load(); }

  struct CompletionResult {
    std::string text;
    std::string finish_reason;
  };

  // One POST /v1/completions with retry/backoff; bias values are clamped to
  // [-100, 100] before transmission.
  CompletionResult complete(const std::string& prompt, int max_tokens, double temperature,
                            double top_p, const std::map<int, double>& logit_bias);

private:
  class InflightGuard;

  EndpointConfig config_;
  std::string api_key_;
  std::atomic<int> total_retries_{0};
  std::mutex inflight_mutex_;
  std::condition_variable inflight_cv_;
  int inflight_ = 0;
};

// Map the penalty onto the wire protocol's bias range: lambda = +infinity
// becomes -100 on every newline-bearing id, finite lambda becomes
// -min(lambda, 100). Targets default to the manifest's newline ids.
std::map<int, double> build_bias_payload(const decode::NewlinePenalty& penalty,
                                         const EndpointAdapter& adapter);

// Greedy (temperature 0) or sampling only. Remote traces carry no token ids.
decode::DecodeTrace remote_generate(EndpointAdapter& adapter, std::string_view prompt,
                                    const decode::DecodeConfig& config);

}  // namespace parabreak::providers
