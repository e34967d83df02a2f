#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "json.hpp"
#include "parabreak/decode.hpp"
#include "parabreak/scripted_model.hpp"
#include "support/random_models.hpp"

using namespace parabreak;
using decode::kMaskedLogit;
using providers::ScriptedModel;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

decode::NewlinePenalty penalty(double lambda, std::vector<int> targets) {
  decode::NewlinePenalty p;
  p.lambda = lambda;
  p.target_ids = std::move(targets);
  return p;
}

std::vector<double> softmax(const std::vector<float>& logits) {
  double max_logit = -kInf;
  for (float v : logits) {
    if (v != kMaskedLogit) max_logit = std::max(max_logit, static_cast<double>(v));
  }
  std::vector<double> probs(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i] == kMaskedLogit) continue;
    probs[i] = std::exp(logits[i] - max_logit);
    total += probs[i];
  }
  for (auto& p : probs) p /= total;
  return probs;
}

// Exhaustive beam-search oracle: enumerate every path (eos-terminated or at
// the step limit), scoring with the same length-normalized log-probability
// rule as the engine, and return the best path's tokens.
struct OracleBest {
  std::vector<int> tokens;
  double score = -kInf;
};

void oracle_dfs(ScriptedModel& model, const std::vector<int>& prompt_ids, std::vector<int>& path,
                double logprob_sum, int scored, int max_steps, OracleBest& best) {
  std::vector<int> context = prompt_ids;
  context.insert(context.end(), path.begin(), path.end());
  std::vector<float> logits = model.next_logits(context);

  double max_logit = -kInf;
  for (float v : logits) max_logit = std::max(max_logit, static_cast<double>(v));
  double lse = 0.0;
  for (float v : logits) lse += std::exp(v - max_logit);
  lse = max_logit + std::log(lse);

  for (int t = 0; t < model.vocab_size(); ++t) {
    double lp = logits[t] - lse;
    double score = (logprob_sum + lp) / (scored + 1);
    if (t == model.eos_token_id()) {
      if (score > best.score) best = {path, score};
      continue;
    }
    path.push_back(t);
    if (scored + 1 == max_steps) {
      if (score > best.score) best = {path, score};
    } else {
      oracle_dfs(model, prompt_ids, path, logprob_sum + lp, scored + 1, max_steps, best);
    }
    path.pop_back();
  }
}

// Three-step toy for the beam tests: picking greedily at step one is a trap.
ScriptedModel beam_toy() {
  ScriptedModel model({"<eos>", "a", "b", "c"}, "<eos>", 1);
  model.set_row({}, model.row_from_probs({{"a", 0.50}, {"b", 0.45}, {"<eos>", 0.04}, {"c", 0.01}}));
  model.set_row({1}, model.row_from_probs({{"a", 0.40}, {"b", 0.30}, {"c", 0.20}, {"<eos>", 0.10}}));
  model.set_row({2}, model.row_from_probs({{"c", 0.90}, {"<eos>", 0.08}, {"a", 0.02}}));
  model.set_row({3}, model.row_from_probs({{"<eos>", 0.85}, {"a", 0.10}, {"b", 0.05}}));
  return model;
}

}  // namespace

// ---------------------------------------------------------------------------
// apply_newline_penalty
// ---------------------------------------------------------------------------

TEST_CASE("penalty: infinite lambda masks the target, greedy picks the runner-up") {
  auto out = decode::apply_newline_penalty({2.0f, 5.0f, 3.0f}, penalty(kInf, {1}));
  CHECK(out[0] == 2.0f);
  CHECK(out[1] == kMaskedLogit);
  CHECK(out[2] == 3.0f);
  CHECK(decode::greedy_step(out) == 2);
}

TEST_CASE("penalty: lambda zero is the identity") {
  std::vector<float> logits = {2.0f, 5.0f, 3.0f};
  auto out = decode::apply_newline_penalty(logits, penalty(0.0, {1}));
  CHECK(out == logits);
}

TEST_CASE("penalty: finite lambda subtracts exactly") {
  auto out = decode::apply_newline_penalty({2.0f, 5.0f, 3.0f}, penalty(1.5, {1}));
  CHECK(out == std::vector<float>{2.0f, 3.5f, 3.0f});
}

TEST_CASE("penalty: transform locality over random logits") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<float> dist(-4.0f, 4.0f);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<float> logits(8);
    for (auto& v : logits) v = dist(rng);
    auto out = decode::apply_newline_penalty(logits, penalty(2.0, {3, 5}));
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (i == 3 || i == 5) {
        CHECK(out[i] == logits[i] - 2.0f);
      } else {
        CHECK(out[i] == logits[i]);
      }
    }
  }
}

TEST_CASE("penalty: target softmax probability is non-increasing in lambda") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<float> dist(-4.0f, 4.0f);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<float> logits(6);
    for (auto& v : logits) v = dist(rng);
    double previous = 1.0;
    for (double lambda : {0.0, 0.5, 1.0, 2.0, 10.0, kInf}) {
      auto out = decode::apply_newline_penalty(logits, penalty(lambda, {2}));
      double p = softmax(out)[2];
      CHECK(p <= previous + 1e-12);
      previous = p;
    }
    CHECK(previous == 0.0);  // lambda = inf ends at exactly zero
  }
}

// ---------------------------------------------------------------------------
// greedy_step / sample_step
// ---------------------------------------------------------------------------

TEST_CASE("greedy: ties break to the lowest token id") {
  CHECK(decode::greedy_step(std::vector<float>{1.0f, 4.0f, 4.0f}) == 1);
}

TEST_CASE("greedy: all masked raises AllMasked") {
  try {
    decode::greedy_step(std::vector<float>{kMaskedLogit, kMaskedLogit});
    FAIL("expected AllMasked");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AllMasked);
  }
}

TEST_CASE("greedy: masked entries are skipped") {
  CHECK(decode::greedy_step(std::vector<float>{0.0f, kMaskedLogit, 2.0f}) == 2);
}

TEST_CASE("sample: two-token uniform logits land near 50/50 over 10k draws") {
  std::mt19937_64 rng(2024);
  std::vector<float> logits = {0.0f, 0.0f};
  int counts[2] = {0, 0};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    counts[decode::sample_step(logits, 1.0, 1.0, rng)] += 1;
  }
  CHECK(std::abs(counts[0] / static_cast<double>(draws) - 0.5) <= 0.02);
  CHECK(std::abs(counts[1] / static_cast<double>(draws) - 0.5) <= 0.02);
}

TEST_CASE("sample: top_p keeping only the argmax behaves as greedy") {
  std::mt19937_64 rng(7);
  std::vector<float> logits = {0.0f, 2.0f, -1.0f};  // p(1) ~ 0.84
  for (int i = 0; i < 200; ++i) {
    CHECK(decode::sample_step(logits, 1.0, 0.5, rng) == 1);
  }
}

TEST_CASE("sample: masked token is never drawn across 10k draws") {
  std::mt19937_64 rng(8);
  std::vector<float> logits = {0.0f, kMaskedLogit, 0.3f};
  for (int i = 0; i < 10000; ++i) {
    CHECK(decode::sample_step(logits, 1.0, 1.0, rng) != 1);
  }
}

TEST_CASE("sample: all masked raises AllMasked") {
  std::mt19937_64 rng(9);
  try {
    decode::sample_step(std::vector<float>{kMaskedLogit, kMaskedLogit}, 1.0, 1.0, rng);
    FAIL("expected AllMasked");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AllMasked);
  }
}

TEST_CASE("sample: identical seeds give identical draw sequences") {
  std::vector<float> logits = {0.1f, 0.7f, -0.4f, 1.1f};
  std::mt19937_64 a(123), b(123);
  for (int i = 0; i < 500; ++i) {
    CHECK(decode::sample_step(logits, 0.8, 0.9, a) == decode::sample_step(logits, 0.8, 0.9, b));
  }
}

// ---------------------------------------------------------------------------
// beam search
// ---------------------------------------------------------------------------

TEST_CASE("beam: width two recovers the exhaustively best path in the toy") {
  auto model = beam_toy();
  OracleBest best;
  std::vector<int> path;
  oracle_dfs(model, {}, path, 0.0, 0, 3, best);

  decode::DecodeConfig config;
  config.strategy = decode::Strategy::beam;
  config.beam_width = 2;
  config.max_new_tokens = 3;
  auto trace = decode::generate(model, "", config);
  CHECK(trace.token_ids == best.tokens);
}

TEST_CASE("beam: huge width equals exhaustive search") {
  auto model = beam_toy();
  OracleBest best;
  std::vector<int> path;
  oracle_dfs(model, {}, path, 0.0, 0, 3, best);

  decode::DecodeConfig config;
  config.strategy = decode::Strategy::beam;
  config.beam_width = 256;  // > vocab^steps
  config.max_new_tokens = 3;
  auto trace = decode::generate(model, "", config);
  CHECK(trace.token_ids == best.tokens);
}

TEST_CASE("beam: all continuations masked raises AllMasked") {
  decode::Beam live;
  live.attacks = {};
  std::vector<std::vector<float>> logits = {{kMaskedLogit, kMaskedLogit, kMaskedLogit}};
  try {
    decode::beam_step({live}, logits, 2);
    FAIL("expected AllMasked");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AllMasked);
  }
}

TEST_CASE("beam: deterministic across repeated runs") {
  auto model = beam_toy();
  decode::DecodeConfig config;
  config.strategy = decode::Strategy::beam;
  config.beam_width = 3;
  config.max_new_tokens = 3;
  auto first = decode::generate(model, "", config);
  auto second = decode::generate(model, "", config);
  CHECK(first.token_ids == second.token_ids);
  CHECK(first.text == second.text);
}

// ---------------------------------------------------------------------------
// maybe_inject
// ---------------------------------------------------------------------------

TEST_CASE("inject: k=1 fires immediately after the first period token") {
  ScriptedModel model({"<eos>", "A cat", ".", "\n"}, "<eos>", 1);
  decode::ParagraphBreakAttack attack;
  attack.k = 1;
  attack.break_token_ids = model.encode("\n\n");
  CHECK(decode::maybe_inject(attack, model.token_id("A cat"), model).empty());
  auto injected = decode::maybe_inject(attack, model.token_id("."), model);
  CHECK(injected == std::vector<int>{3, 3});
  CHECK(attack.fired);
  // Idempotent thereafter.
  CHECK(decode::maybe_inject(attack, model.token_id("."), model).empty());
}

TEST_CASE("inject: k greater than the period count never fires") {
  ScriptedModel model({"<eos>", "Hi.", "x", "\n"}, "<eos>", 1);
  decode::ParagraphBreakAttack attack;
  attack.k = 3;
  attack.break_token_ids = model.encode("\n\n");
  for (int round = 0; round < 2; ++round) {
    CHECK(decode::maybe_inject(attack, model.token_id("Hi."), model).empty());
    CHECK(decode::maybe_inject(attack, model.token_id("x"), model).empty());
  }
  CHECK_FALSE(attack.fired);
}

TEST_CASE("inject: generate places exactly one break after the k-th period") {
  // Manual trace of "Hi. Yes. No.": the break belongs right after "Yes.".
  ScriptedModel model({"<eos>", "Hi.", " Yes.", " No.", "\n"}, "<eos>", 1);
  model.set_row({}, model.row_from_probs({{"Hi.", 0.9}, {"<eos>", 0.1}}));
  model.set_row_text({"Hi."}, model.row_from_probs({{" Yes.", 0.9}, {"<eos>", 0.1}}));
  model.set_row_text({" Yes."}, model.row_from_probs({{" No.", 0.9}, {"<eos>", 0.1}}));
  model.set_row_text({" No."}, model.row_from_probs({{"<eos>", 0.9}, {"Hi.", 0.1}}));
  model.set_row_text({"\n"}, model.row_from_probs({{" No.", 0.6}, {"<eos>", 0.4}}));

  decode::DecodeConfig config;
  config.strategy = decode::Strategy::greedy;
  config.max_new_tokens = 8;
  decode::ParagraphBreakAttack attack;
  attack.k = 2;
  config.injections = {attack};

  auto trace = decode::generate(model, "", config);
  CHECK(trace.text == "Hi. Yes.\n\n No.");
  auto injected = trace.injected_positions();
  REQUIRE(injected.size() == 2);
  CHECK(injected[0] == 2);
  CHECK(injected[1] == 3);
  // Exactly one "\n\n" in the output.
  CHECK(trace.text.find("\n\n") == trace.text.rfind("\n\n"));
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

TEST_CASE("generate: greedy path over a scripted chain gives the exact text") {
  // Hand simulation: start -> "A" -> " small" -> " dog" -> " runs" -> " far"
  // -> "." -> eos.
  ScriptedModel model({"<eos>", "A", " small", " dog", " runs", " far", "."}, "<eos>", 1);
  model.set_row({}, model.row_from_probs({{"A", 0.9}, {"<eos>", 0.1}}));
  model.set_row_text({"A"}, model.row_from_probs({{" small", 0.8}, {".", 0.2}}));
  model.set_row_text({" small"}, model.row_from_probs({{" dog", 0.8}, {".", 0.2}}));
  model.set_row_text({" dog"}, model.row_from_probs({{" runs", 0.8}, {".", 0.2}}));
  model.set_row_text({" runs"}, model.row_from_probs({{" far", 0.8}, {".", 0.2}}));
  model.set_row_text({" far"}, model.row_from_probs({{".", 0.9}, {"<eos>", 0.1}}));
  model.set_row_text({"."}, model.row_from_probs({{"<eos>", 0.95}, {"A", 0.05}}));

  decode::DecodeConfig config;
  config.strategy = decode::Strategy::greedy;
  config.max_new_tokens = 16;
  auto trace = decode::generate(model, "", config);
  CHECK(trace.text == "A small dog runs far.");
  CHECK(trace.finish_reason == decode::FinishReason::eos);
  CHECK(trace.token_ids.size() == 6);
  CHECK(trace.steps.size() == trace.token_ids.size());
  CHECK(model.decode(trace.token_ids) == trace.text);
}

TEST_CASE("generate: infinite penalty turns a newline argmax into the runner-up") {
  // Hand simulation: at step 3 the scripted argmax is "\n"; with the
  // penalty it must fall to " b".
  decode::DecodeConfig plain;
  plain.strategy = decode::Strategy::greedy;
  plain.max_new_tokens = 3;
  ScriptedModel with_suffix2({"<eos>", "a", " b", "\n"}, "<eos>", 2);
  with_suffix2.set_row({}, with_suffix2.row_from_probs({{"a", 0.9}, {"<eos>", 0.1}}));
  with_suffix2.set_row_text({"a"}, with_suffix2.row_from_probs({{"a", 0.6}, {" b", 0.3}}));
  with_suffix2.set_row_text(
      {"a", "a"}, with_suffix2.row_from_probs({{"\n", 0.6}, {" b", 0.3}, {"<eos>", 0.1}}));
  with_suffix2.set_row_text({"a", " b"}, with_suffix2.row_from_probs({{"<eos>", 0.9}}));
  with_suffix2.set_default_scores(with_suffix2.row_from_probs({{"<eos>", 1.0}}));

  auto unmitigated = decode::generate(with_suffix2, "", plain);
  CHECK(unmitigated.text == "aa\n");

  decode::DecodeConfig mitigated = plain;
  mitigated.transforms.push_back({kInf, std::nullopt});
  auto trace = decode::generate(with_suffix2, "", mitigated);
  CHECK(trace.text == "aa b");
  CHECK(trace.steps[2].token_id == with_suffix2.token_id(" b"));
}

TEST_CASE("generate: max_new_tokens below one is rejected") {
  ScriptedModel model({"<eos>", "a"}, "<eos>", 1);
  decode::DecodeConfig config;
  config.strategy = decode::Strategy::greedy;
  config.max_new_tokens = 0;
  try {
    decode::generate(model, "", config);
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfig);
  }
}

TEST_CASE("generate: config fields must match the strategy") {
  decode::DecodeConfig config;
  config.strategy = decode::Strategy::sample;
  config.max_new_tokens = 4;
  config.temperature = 1.0;
  config.top_p = 1.0;
  // missing seed
  CHECK_THROWS_AS(config.validate(), Error);
  config.seed = 1;
  CHECK_NOTHROW(config.validate());
  config.beam_width = 4;  // not a sampling field
  CHECK_THROWS_AS(config.validate(), Error);

  decode::DecodeConfig greedy;
  greedy.strategy = decode::Strategy::greedy;
  greedy.max_new_tokens = 4;
  greedy.temperature = 0.5;  // not a greedy field
  CHECK_THROWS_AS(greedy.validate(), Error);

  decode::DecodeConfig beam;
  beam.strategy = decode::Strategy::beam;
  beam.max_new_tokens = 4;
  beam.beam_width = 1;  // must be >= 2
  CHECK_THROWS_AS(beam.validate(), Error);
}

TEST_CASE("generate: mitigation guarantee on randomized models, all strategies") {
  std::mt19937_64 rng(555);
  for (int iter = 0; iter < 60; ++iter) {
    auto model = support::random_scripted_model(rng, /*period_heavy=*/false);
    for (auto strategy :
         {decode::Strategy::greedy, decode::Strategy::sample, decode::Strategy::beam}) {
      decode::DecodeConfig config;
      config.strategy = strategy;
      config.max_new_tokens = 24;
      if (strategy == decode::Strategy::sample) {
        config.temperature = 1.0;
        config.top_p = 1.0;
        config.seed = rng();
      }
      if (strategy == decode::Strategy::beam) config.beam_width = 3;
      config.transforms.push_back({kInf, std::nullopt});
      auto trace = decode::generate(model, "word", config);
      CHECK(trace.text.find('\n') == std::string::npos);
    }
  }
}

TEST_CASE("generate: greedy and sampling are bit-deterministic") {
  std::mt19937_64 rng(777);
  auto model = support::random_scripted_model(rng, false);

  decode::DecodeConfig greedy;
  greedy.strategy = decode::Strategy::greedy;
  greedy.max_new_tokens = 16;
  CHECK(decode::generate(model, "word", greedy).token_ids ==
        decode::generate(model, "word", greedy).token_ids);

  decode::DecodeConfig sample;
  sample.strategy = decode::Strategy::sample;
  sample.max_new_tokens = 16;
  sample.temperature = 0.9;
  sample.top_p = 0.95;
  sample.seed = 4242;
  auto first = decode::generate(model, "word", sample);
  auto second = decode::generate(model, "word", sample);
  CHECK(first.token_ids == second.token_ids);
  sample.seed = 4243;
  // A different seed is allowed to differ (and practically does).
  auto third = decode::generate(model, "word", sample);
  CHECK(third.steps.size() == third.token_ids.size());
}

TEST_CASE("trace serialization carries the documented fields") {
  ScriptedModel model({"<eos>", "Hi.", "\n"}, "<eos>", 1);
  model.set_row({}, model.row_from_probs({{"Hi.", 0.9}, {"<eos>", 0.1}}));
  model.set_row_text({"Hi."}, model.row_from_probs({{"<eos>", 0.9}, {"Hi.", 0.1}}));
  model.set_row_text({"\n"}, model.row_from_probs({{"<eos>", 1.0}}));

  decode::DecodeConfig config;
  config.strategy = decode::Strategy::greedy;
  config.max_new_tokens = 4;
  decode::ParagraphBreakAttack attack;
  attack.k = 1;
  config.injections = {attack};
  auto trace = decode::generate(model, "", config);

  decode::TraceMeta meta;
  meta.run_id = "run";
  meta.image_id = "img";
  meta.prompt_id = "BASE";
  meta.strategy = decode::Strategy::greedy;
  meta.lambda = kInf;
  meta.attack_k = 1;
  auto line = decode::trace_to_json_line(trace, meta);
  auto doc = nlohmann::json::parse(line);
  CHECK(doc["run_id"] == "run");
  CHECK(doc["image_id"] == "img");
  CHECK(doc["prompt_id"] == "BASE");
  CHECK(doc["strategy"] == "greedy");
  CHECK(doc["lambda"] == "inf");
  CHECK(doc["attack_k"] == 1);
  CHECK(doc["text"] == "Hi.\n\n");
  CHECK(doc["token_ids"].size() == 3);
  CHECK(doc["injected_positions"] == nlohmann::json::array({1, 2}));
  CHECK(doc["finish_reason"] == "eos");
}
