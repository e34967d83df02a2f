#pragma once

/**
 * Token-by-token generation against an abstract logits provider, with two
 * interventions on top of the plain strategies:
 *
 * - NewlinePenalty: subtract lambda from the logits of every newline-bearing
 *   token before selection; lambda = +infinity masks them outright (exact
 *   zero probability, realized as a -inf sentinel).
 * - ParagraphBreakAttack: count generated tokens whose decoded text ends in
 *   '.', and after the k-th one force-append the token sequence for "\n\n".
 *
 * Transforms run in configuration order before strategy selection;
 * injections run after selection. A single generation is strictly
 * sequential; distinct generations share no mutable state.
 */

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "parabreak/error.hpp"

namespace parabreak::decode {

inline constexpr float kMaskedLogit = -std::numeric_limits<float>::infinity();

// Any source of next-token scores over a vocabulary given a token context.
class LogitsProvider {
public:
  virtual ~LogitsProvider() = default;

  virtual int vocab_size() const = 0;
  // Must return vocab_size scores, all finite; masking is the engine's job.
  virtual std::vector<float> next_logits(std::span<const int> context) = 0;
  virtual std::string decode(std::span<const int> ids) const = 0;
  virtual std::vector<int> encode(std::string_view text) const = 0;
  virtual int eos_token_id() const = 0;
  // Every vocab id whose decoded text contains '\n'.
  virtual const std::vector<int>& newline_token_ids() const = 0;
};

enum class Strategy { greedy, sample, beam };

Strategy strategy_from_string(std::string_view name);
std::string_view to_string(Strategy strategy);

struct NewlinePenalty {
  // Nonnegative; +infinity masks the targets entirely.
  double lambda = std::numeric_limits<double>::infinity();
  // Unset = resolve to provider.newline_token_ids() at generation time.
  std::optional<std::vector<int>> target_ids;
};

struct ParagraphBreakAttack {
  int k = 1;  // which '.'-ending token triggers the injection
  // Decoded concatenation must be "\n\n"; empty = derive via encode("\n\n").
  std::vector<int> break_token_ids;
  bool fired = false;
  int periods_seen = 0;
};

enum class FinishReason { eos, length };

struct StepRecord {
  int token_id = 0;
  float logit_pre = 0.0f;   // chosen id's logit before transforms
  float logit_post = 0.0f;  // and after; zeros for injected tokens
  bool injected = false;
};

struct DecodeTrace {
  std::vector<int> token_ids;  // generated ids, eos excluded
  std::string text;            // decode(token_ids)
  std::vector<StepRecord> steps;
  FinishReason finish_reason = FinishReason::length;

  std::vector<std::size_t> injected_positions() const;
};

struct DecodeConfig {
  Strategy strategy = Strategy::greedy;
  int max_new_tokens = 1;  // counts selected tokens; injected tokens ride along
  // Sampling only.
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<std::uint64_t> seed;
  // Beam only.
  std::optional<int> beam_width;
  std::vector<NewlinePenalty> transforms;
  std::vector<ParagraphBreakAttack> injections;

  // Strategy-specific fields must be present exactly when relevant.
  void validate() const;
};

// out[i] = logits[i] - lambda for targets, unchanged elsewhere; lambda =
// +infinity maps targets to the -inf sentinel. target_ids must be resolved.
std::vector<float> apply_newline_penalty(std::vector<float> logits, const NewlinePenalty& penalty);

// Argmax over non-masked entries; ties break to the lowest token id.
int greedy_step(std::span<const float> logits);

// softmax(logits / temperature), nucleus filter at top_p, renormalize, then
// one draw from the given stream. Masked ids have exactly zero probability.
int sample_step(std::span<const float> logits, double temperature, double top_p,
                std::mt19937_64& rng);

struct Beam {
  std::vector<int> token_ids;
  std::vector<StepRecord> steps;
  double logprob_sum = 0.0;
  int scored_steps = 0;  // includes the retiring eos step; excludes injections
  bool finished = false;
  std::vector<ParagraphBreakAttack> attacks;
  int parent_index = -1;  // input beam this one extends, set by beam_step

  double score() const {
    return scored_steps > 0 ? logprob_sum / static_cast<double>(scored_steps) : 0.0;
  }
};

// One expansion round of length-normalized beam search over post-transform
// logits. Beams that select eos come back finished (eos not appended).
std::vector<Beam> beam_step(const std::vector<Beam>& live,
                            const std::vector<std::vector<float>>& logits_per_beam, int beam_width);

// Count the period if the chosen token's text ends with '.'; on the k-th
// one return the break tokens and latch. Idempotent once fired.
std::vector<int> maybe_inject(ParagraphBreakAttack& attack, int chosen_id,
                              const LogitsProvider& provider);

DecodeTrace generate(LogitsProvider& provider, std::string_view prompt, const DecodeConfig& config);

struct TraceMeta {
  std::string run_id;
  std::string image_id;
  std::string prompt_id;
  Strategy strategy = Strategy::greedy;
  std::optional<double> lambda;
  std::optional<int> attack_k;
};

// One generation per JSONL line: run_id, image_id, prompt_id, strategy,
// lambda, attack_k, token_ids, text, finish_reason, injected_positions.
std::string trace_to_json_line(const DecodeTrace& trace, const TraceMeta& meta);

}  // namespace parabreak::decode
