#include "parabreak/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace parabreak::decode {

namespace {

// Uniform double in [0, 1) from the top 53 bits; bit-identical across
// compilers, unlike std::uniform_real_distribution.
double next_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double log_sum_exp(std::span<const float> logits) {
  float max_logit = kMaskedLogit;
  for (float v : logits) max_logit = std::max(max_logit, v);
  if (!std::isfinite(max_logit)) return kMaskedLogit;
  double sum = 0.0;
  for (float v : logits) {
    if (std::isfinite(v)) sum += std::exp(static_cast<double>(v) - max_logit);
  }
  return max_logit + std::log(sum);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorKind::InvalidConfig, message);
}

}  // namespace

Strategy strategy_from_string(std::string_view name) {
  if (name == "greedy") return Strategy::greedy;
  if (name == "sample") return Strategy::sample;
  if (name == "beam") return Strategy::beam;
  throw Error(ErrorKind::InvalidConfig, "unknown strategy '" + std::string(name) + "'");
}

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::greedy: return "greedy";
    case Strategy::sample: return "sample";
    case Strategy::beam: return "beam";
  }
  return "unknown";
}

std::vector<std::size_t> DecodeTrace::injected_positions() const {
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].injected) positions.push_back(i);
  }
  return positions;
}

void DecodeConfig::validate() const {
  require(max_new_tokens >= 1, "max_new_tokens must be >= 1");
  const bool sampling = strategy == Strategy::sample;
  require(temperature.has_value() == sampling, "temperature is a sampling-only field");
  require(top_p.has_value() == sampling, "top_p is a sampling-only field");
  require(seed.has_value() == sampling, "seed is a sampling-only field");
  require(beam_width.has_value() == (strategy == Strategy::beam),
          "beam_width is a beam-only field");
  if (sampling) {
    require(*temperature > 0.0, "temperature must be positive");
    require(*top_p > 0.0 && *top_p <= 1.0, "top_p must be in (0, 1]");
  }
  if (beam_width) require(*beam_width >= 2, "beam_width must be >= 2");
  for (const auto& penalty : transforms) {
    require(penalty.lambda >= 0.0, "newline penalty lambda must be nonnegative");
  }
  for (const auto& attack : injections) {
    require(attack.k >= 1, "attack k must be >= 1");
  }
}

std::vector<float> apply_newline_penalty(std::vector<float> logits, const NewlinePenalty& penalty) {
  require(penalty.target_ids.has_value(), "newline penalty target ids not resolved");
  const bool mask = std::isinf(penalty.lambda);
  for (int id : *penalty.target_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= logits.size()) {
      throw Error(ErrorKind::InvalidTokenId, "penalty target id " + std::to_string(id));
    }
    logits[id] = mask ? kMaskedLogit : logits[id] - static_cast<float>(penalty.lambda);
  }
  return logits;
}

int greedy_step(std::span<const float> logits) {
  int best = -1;
  float best_score = kMaskedLogit;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i] == kMaskedLogit) continue;
    if (best < 0 || logits[i] > best_score) {
      best = static_cast<int>(i);
      best_score = logits[i];
    }
  }
  if (best < 0) throw Error(ErrorKind::AllMasked, "every logit is masked");
  return best;
}

int sample_step(std::span<const float> logits, double temperature, double top_p,
                std::mt19937_64& rng) {
  require(temperature > 0.0, "temperature must be positive");
  require(top_p > 0.0 && top_p <= 1.0, "top_p must be in (0, 1]");

  float max_logit = kMaskedLogit;
  for (float v : logits) max_logit = std::max(max_logit, v);
  if (!std::isfinite(max_logit)) throw Error(ErrorKind::AllMasked, "every logit is masked");

  std::vector<double> probs(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i] == kMaskedLogit) continue;
    double p = std::exp((static_cast<double>(logits[i]) - max_logit) / temperature);
    probs[i] = p;
    total += p;
  }

  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });

  // Smallest descending-probability prefix with cumulative mass >= top_p.
  std::size_t kept = 0;
  double kept_mass = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    kept_mass += probs[order[i]] / total;
    kept = i + 1;
    if (kept_mass >= top_p) break;
  }

  double kept_total = 0.0;
  for (std::size_t i = 0; i < kept; ++i) kept_total += probs[order[i]];
  double u = next_uniform(rng) * kept_total;
  double cum = 0.0;
  int last_nonzero = -1;
  for (std::size_t i = 0; i < kept; ++i) {
    double p = probs[order[i]];
    if (p <= 0.0) continue;  // a zero-probability token is never drawn
    last_nonzero = order[i];
    cum += p;
    if (u < cum) return order[i];
  }
  if (last_nonzero < 0) throw Error(ErrorKind::AllMasked, "nucleus kept no positive mass");
  return last_nonzero;
}

std::vector<Beam> beam_step(const std::vector<Beam>& live,
                            const std::vector<std::vector<float>>& logits_per_beam,
                            int beam_width) {
  require(beam_width >= 2, "beam_width must be >= 2");
  require(live.size() == logits_per_beam.size(), "one logits row per live beam");

  struct Candidate {
    double norm_score;
    double logprob;
    int beam_index;
    int token;
  };
  std::vector<Candidate> candidates;
  for (std::size_t b = 0; b < live.size(); ++b) {
    const auto& logits = logits_per_beam[b];
    double lse = log_sum_exp(logits);
    if (!std::isfinite(lse)) continue;  // fully masked beam contributes nothing
    for (std::size_t t = 0; t < logits.size(); ++t) {
      if (logits[t] == kMaskedLogit) continue;
      double lp = static_cast<double>(logits[t]) - lse;
      double norm = (live[b].logprob_sum + lp) / static_cast<double>(live[b].scored_steps + 1);
      candidates.push_back({norm, lp, static_cast<int>(b), static_cast<int>(t)});
    }
  }
  if (candidates.empty()) throw Error(ErrorKind::AllMasked, "all beam continuations masked");

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.norm_score != b.norm_score) return a.norm_score > b.norm_score;
    if (a.beam_index != b.beam_index) return a.beam_index < b.beam_index;
    return a.token < b.token;
  });
  if (candidates.size() > static_cast<std::size_t>(beam_width)) {
    candidates.resize(static_cast<std::size_t>(beam_width));
  }

  std::vector<Beam> next;
  next.reserve(candidates.size());
  for (const auto& candidate : candidates) {
    Beam beam = live[candidate.beam_index];
    beam.parent_index = candidate.beam_index;
    beam.logprob_sum += candidate.logprob;
    beam.scored_steps += 1;
    beam.token_ids.push_back(candidate.token);
    beam.steps.push_back({candidate.token, 0.0f,
                          logits_per_beam[candidate.beam_index][candidate.token], false});
    next.push_back(std::move(beam));
  }
  return next;
}

std::vector<int> maybe_inject(ParagraphBreakAttack& attack, int chosen_id,
                              const LogitsProvider& provider) {
  if (attack.fired) return {};
  const int id = chosen_id;
  std::string text = provider.decode(std::span<const int>(&id, 1));
  if (!text.ends_with('.')) return {};
  attack.periods_seen += 1;
  if (attack.periods_seen != attack.k) return {};
  attack.fired = true;
  return attack.break_token_ids;
}

namespace {

struct ResolvedConfig {
  std::vector<NewlinePenalty> transforms;
  std::vector<ParagraphBreakAttack> injections;
};

ResolvedConfig resolve(const DecodeConfig& config, LogitsProvider& provider) {
  ResolvedConfig resolved{config.transforms, config.injections};
  for (auto& penalty : resolved.transforms) {
    if (!penalty.target_ids) penalty.target_ids = provider.newline_token_ids();
  }
  for (auto& attack : resolved.injections) {
    if (attack.break_token_ids.empty()) attack.break_token_ids = provider.encode("\n\n");
  }
  return resolved;
}

std::vector<float> run_transforms(const std::vector<float>& logits,
                                  const std::vector<NewlinePenalty>& transforms) {
  std::vector<float> post = logits;
  for (const auto& penalty : transforms) {
    post = apply_newline_penalty(std::move(post), penalty);
  }
  return post;
}

DecodeTrace generate_sequential(LogitsProvider& provider, std::vector<int> context,
                                const DecodeConfig& config, const ResolvedConfig& resolved) {
  DecodeTrace trace;
  auto injections = resolved.injections;
  std::mt19937_64 rng(config.seed.value_or(0));

  for (int scored = 0; scored < config.max_new_tokens; ++scored) {
    std::vector<float> logits = provider.next_logits(context);
    std::vector<float> post = run_transforms(logits, resolved.transforms);
    int chosen = config.strategy == Strategy::greedy
                     ? greedy_step(post)
                     : sample_step(post, *config.temperature, *config.top_p, rng);
    if (chosen == provider.eos_token_id()) {
      trace.finish_reason = FinishReason::eos;
      trace.text = provider.decode(trace.token_ids);
      return trace;
    }
    trace.steps.push_back({chosen, logits[chosen], post[chosen], false});
    trace.token_ids.push_back(chosen);
    context.push_back(chosen);
    for (auto& attack : injections) {
      for (int id : maybe_inject(attack, chosen, provider)) {
        trace.steps.push_back({id, 0.0f, 0.0f, true});
        trace.token_ids.push_back(id);
        context.push_back(id);
      }
    }
  }
  trace.finish_reason = FinishReason::length;
  trace.text = provider.decode(trace.token_ids);
  return trace;
}

DecodeTrace generate_beam(LogitsProvider& provider, const std::vector<int>& prompt_ids,
                          const DecodeConfig& config, const ResolvedConfig& resolved) {
  const int width = *config.beam_width;
  const int eos = provider.eos_token_id();

  std::vector<Beam> live(1);
  live[0].attacks = resolved.injections;
  std::vector<Beam> retired;

  for (int step = 0; step < config.max_new_tokens && !live.empty(); ++step) {
    std::vector<std::vector<float>> raw(live.size());
    std::vector<std::vector<float>> post(live.size());
    for (std::size_t b = 0; b < live.size(); ++b) {
      std::vector<int> context = prompt_ids;
      context.insert(context.end(), live[b].token_ids.begin(), live[b].token_ids.end());
      raw[b] = provider.next_logits(context);
      post[b] = run_transforms(raw[b], resolved.transforms);
    }

    std::vector<Beam> expanded = beam_step(live, post, width);
    std::vector<Beam> next_live;
    for (auto& beam : expanded) {
      const int parent = beam.parent_index;
      const int token = beam.token_ids.back();
      if (token == eos) {
        // Retire: keep the eos log-probability in the score, drop the token.
        beam.token_ids.pop_back();
        beam.steps.pop_back();
        beam.finished = true;
        retired.push_back(std::move(beam));
        continue;
      }
      beam.steps.back().logit_pre = raw[parent][token];
      for (auto& attack : beam.attacks) {
        for (int id : maybe_inject(attack, token, provider)) {
          beam.steps.push_back({id, 0.0f, 0.0f, true});
          beam.token_ids.push_back(id);
        }
      }
      next_live.push_back(std::move(beam));
    }
    live = std::move(next_live);
  }

  const Beam* best = nullptr;
  auto consider = [&best](const std::vector<Beam>& pool) {
    for (const auto& beam : pool) {
      if (!best || beam.score() > best->score()) best = &beam;
    }
  };
  consider(retired);
  consider(live);
  if (!best) throw Error(ErrorKind::AllMasked, "beam search produced no beams");

  DecodeTrace trace;
  trace.token_ids = best->token_ids;
  trace.steps = best->steps;
  trace.finish_reason = best->finished ? FinishReason::eos : FinishReason::length;
  trace.text = provider.decode(trace.token_ids);
  return trace;
}

}  // namespace

DecodeTrace generate(LogitsProvider& provider, std::string_view prompt,
                     const DecodeConfig& config) {
  config.validate();
  std::vector<int> prompt_ids = provider.encode(prompt);
  ResolvedConfig resolved = resolve(config, provider);
  if (config.strategy == Strategy::beam) {
    return generate_beam(provider, prompt_ids, config, resolved);
  }
  return generate_sequential(provider, std::move(prompt_ids), config, resolved);
}

std::string trace_to_json_line(const DecodeTrace& trace, const TraceMeta& meta) {
  nlohmann::json obj;
  obj["run_id"] = meta.run_id;
  obj["image_id"] = meta.image_id;
  obj["prompt_id"] = meta.prompt_id;
  obj["strategy"] = std::string(to_string(meta.strategy));
  if (meta.lambda) {
    if (std::isinf(*meta.lambda)) {
      obj["lambda"] = "inf";
    } else {
      obj["lambda"] = *meta.lambda;
    }
  } else {
    obj["lambda"] = nullptr;
  }
  if (meta.attack_k) {
    obj["attack_k"] = *meta.attack_k;
  } else {
    obj["attack_k"] = nullptr;
  }
  obj["token_ids"] = trace.token_ids;
  obj["text"] = trace.text;
  obj["finish_reason"] = trace.finish_reason == FinishReason::eos ? "eos" : "length";
  obj["injected_positions"] = trace.injected_positions();
  return obj.dump();
}

}  // namespace parabreak::decode
