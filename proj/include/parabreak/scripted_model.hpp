#pragma once

/**
 * Deterministic table-driven logits provider for exact tests and the
 * offline demo.
 *
 * Tokens are literal strings (multi-word phrases allowed). next_logits is
 * an exact lookup on the last `suffix_len` context ids, with an optional
 * phase rule: once the decoded context contains the trigger text (default
 * "\n\n") an alternate table takes precedence. Lookup order is phase table,
 * phase default, main table, main default.
 *
 * encode() is a greedy longest-token match over the vocab strings, so
 * decode(encode(s)) == s for any string the vocab can cover.
 */

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "parabreak/decode.hpp"

namespace parabreak::providers {

class ScriptedModel : public decode::LogitsProvider {
public:
  struct PhaseRule {
    std::string trigger = "\n\n";
    std::map<std::vector<int>, std::vector<float>> table;
    std::optional<std::vector<float>> default_scores;
  };

  ScriptedModel(std::vector<std::string> vocab, const std::string& eos_text, int suffix_len = 1);

  // LogitsProvider surface.
  int vocab_size() const override { return static_cast<int>(vocab_.size()); }
  std::vector<float> next_logits(std::span<const int> context) override;
  std::string decode(std::span<const int> ids) const override;
  std::vector<int> encode(std::string_view text) const override;
  int eos_token_id() const override { return eos_id_; }
  const std::vector<int>& newline_token_ids() const override { return newline_ids_; }

  int token_id(const std::string& text) const;
  const std::string& token_text(int id) const;
  int suffix_len() const { return suffix_len_; }

  // Table building. Rows must be vocab_size long and finite.
  void set_default_scores(std::vector<float> scores);
  void set_row(const std::vector<int>& suffix, std::vector<float> scores);
  void set_row_text(const std::vector<std::string>& suffix_tokens, std::vector<float> scores);
  void enable_phase(std::string trigger = "\n\n");
  void set_phase_default_scores(std::vector<float> scores);
  void set_phase_row(const std::vector<int>& suffix, std::vector<float> scores);
  void set_phase_row_text(const std::vector<std::string>& suffix_tokens, std::vector<float> scores);

  // Score row with ln(p) at the named tokens and a floor elsewhere, so the
  // row softmaxes to the given distribution.
  std::vector<float> row_from_probs(const std::vector<std::pair<std::string, double>>& probs) const;

  nlohmann::json to_json() const;
  static ScriptedModel from_json(const nlohmann::json& doc);
  static ScriptedModel load(const std::string& path);

private:
  std::vector<int> suffix_of(std::span<const int> context) const;
  void check_row(const std::vector<float>& scores) const;

  std::vector<std::string> vocab_;
  std::map<std::string, int> index_;
  int eos_id_ = 0;
  int suffix_len_ = 1;
  std::map<std::vector<int>, std::vector<float>> table_;
  std::optional<std::vector<float>> default_scores_;
  std::optional<PhaseRule> phase_;
  std::vector<int> newline_ids_;
};

}  // namespace parabreak::providers
