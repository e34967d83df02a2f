#include "parabreak/scripted_model.hpp"

#include <cmath>
#include <fstream>

namespace parabreak::providers {

namespace {

// Low enough to softmax to exactly zero against ordinary rows, while keeping
// the provider contract that every emitted score is finite.
constexpr float kFloorScore = -1e9f;

}  // namespace

ScriptedModel::ScriptedModel(std::vector<std::string> vocab, const std::string& eos_text,
                             int suffix_len)
    : vocab_(std::move(vocab)), suffix_len_(suffix_len) {
  if (vocab_.empty()) throw Error(ErrorKind::InvalidConfig, "vocab must not be empty");
  if (suffix_len_ < 1) throw Error(ErrorKind::InvalidConfig, "suffix_len must be >= 1");
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (vocab_[i].empty()) throw Error(ErrorKind::InvalidConfig, "empty vocab token");
    auto [it, inserted] = index_.emplace(vocab_[i], static_cast<int>(i));
    if (!inserted) throw Error(ErrorKind::InvalidConfig, "duplicate vocab token '" + vocab_[i] + "'");
    if (vocab_[i].find('\n') != std::string::npos) newline_ids_.push_back(static_cast<int>(i));
  }
  eos_id_ = token_id(eos_text);
}

int ScriptedModel::token_id(const std::string& text) const {
  auto it = index_.find(text);
  if (it == index_.end()) {
    throw Error(ErrorKind::InvalidTokenId, "no vocab token with text '" + text + "'");
  }
  return it->second;
}

const std::string& ScriptedModel::token_text(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
    throw Error(ErrorKind::InvalidTokenId, "token id " + std::to_string(id) + " out of range");
  }
  return vocab_[id];
}

std::vector<int> ScriptedModel::suffix_of(std::span<const int> context) const {
  const std::size_t take = std::min<std::size_t>(context.size(), suffix_len_);
  return {context.end() - take, context.end()};
}

void ScriptedModel::check_row(const std::vector<float>& scores) const {
  if (scores.size() != vocab_.size()) {
    throw Error(ErrorKind::InvalidConfig, "score row length does not match vocab size");
  }
  for (float v : scores) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::InvalidConfig, "score rows must be finite");
    }
  }
}

void ScriptedModel::set_default_scores(std::vector<float> scores) {
  check_row(scores);
  default_scores_ = std::move(scores);
}

void ScriptedModel::set_row(const std::vector<int>& suffix, std::vector<float> scores) {
  check_row(scores);
  for (int id : suffix) token_text(id);
  table_[suffix] = std::move(scores);
}

void ScriptedModel::set_row_text(const std::vector<std::string>& suffix_tokens,
                                 std::vector<float> scores) {
  std::vector<int> suffix;
  suffix.reserve(suffix_tokens.size());
  for (const auto& text : suffix_tokens) suffix.push_back(token_id(text));
  set_row(suffix, std::move(scores));
}

void ScriptedModel::enable_phase(std::string trigger) {
  phase_.emplace();
  phase_->trigger = std::move(trigger);
}

void ScriptedModel::set_phase_default_scores(std::vector<float> scores) {
  if (!phase_) enable_phase();
  check_row(scores);
  phase_->default_scores = std::move(scores);
}

void ScriptedModel::set_phase_row(const std::vector<int>& suffix, std::vector<float> scores) {
  if (!phase_) enable_phase();
  check_row(scores);
  for (int id : suffix) token_text(id);
  phase_->table[suffix] = std::move(scores);
}

void ScriptedModel::set_phase_row_text(const std::vector<std::string>& suffix_tokens,
                                       std::vector<float> scores) {
  std::vector<int> suffix;
  suffix.reserve(suffix_tokens.size());
  for (const auto& text : suffix_tokens) suffix.push_back(token_id(text));
  set_phase_row(suffix, std::move(scores));
}

std::vector<float> ScriptedModel::row_from_probs(
    const std::vector<std::pair<std::string, double>>& probs) const {
  std::vector<float> row(vocab_.size(), kFloorScore);
  for (const auto& [text, p] : probs) {
    if (p <= 0.0) throw Error(ErrorKind::InvalidConfig, "probabilities must be positive");
    row[token_id(text)] = static_cast<float>(std::log(p));
  }
  return row;
}

std::vector<float> ScriptedModel::next_logits(std::span<const int> context) {
  for (int id : context) token_text(id);  // bounds check -> InvalidTokenId
  const std::vector<int> suffix = suffix_of(context);
  if (phase_ && decode(context).find(phase_->trigger) != std::string::npos) {
    auto it = phase_->table.find(suffix);
    if (it != phase_->table.end()) return it->second;
    if (phase_->default_scores) return *phase_->default_scores;
  }
  auto it = table_.find(suffix);
  if (it != table_.end()) return it->second;
  if (default_scores_) return *default_scores_;
  throw Error(ErrorKind::InvalidConfig, "no table row for context suffix and no default scores");
}

std::string ScriptedModel::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) out += token_text(id);
  return out;
}

std::vector<int> ScriptedModel::encode(std::string_view text) const {
  std::vector<int> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    int best = -1;
    std::size_t best_len = 0;
    for (const auto& [token, id] : index_) {
      if (token.size() > best_len && token.size() <= text.size() - pos &&
          text.compare(pos, token.size(), token) == 0) {
        best = id;
        best_len = token.size();
      }
    }
    if (best < 0) {
      throw Error(ErrorKind::UnencodableText,
                  "no vocab token matches text at offset " + std::to_string(pos));
    }
    ids.push_back(best);
    pos += best_len;
  }
  return ids;
}

nlohmann::json ScriptedModel::to_json() const {
  nlohmann::json doc;
  doc["vocab"] = vocab_;
  doc["eos"] = vocab_[eos_id_];
  doc["suffix_len"] = suffix_len_;
  auto rows_to_json = [](const std::map<std::vector<int>, std::vector<float>>& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [suffix, scores] : table) {
      rows.push_back({{"suffix", suffix}, {"scores", scores}});
    }
    return rows;
  };
  doc["rows"] = rows_to_json(table_);
  if (default_scores_) doc["default_scores"] = *default_scores_;
  if (phase_) {
    nlohmann::json phase;
    phase["trigger"] = phase_->trigger;
    phase["rows"] = rows_to_json(phase_->table);
    if (phase_->default_scores) phase["default_scores"] = *phase_->default_scores;
    doc["phase"] = std::move(phase);
  }
  return doc;
}

ScriptedModel ScriptedModel::from_json(const nlohmann::json& doc) {
  try {
    ScriptedModel model(doc.at("vocab").get<std::vector<std::string>>(),
                        doc.at("eos").get<std::string>(), doc.value("suffix_len", 1));
    for (const auto& row : doc.value("rows", nlohmann::json::array())) {
      model.set_row(row.at("suffix").get<std::vector<int>>(),
                    row.at("scores").get<std::vector<float>>());
    }
    if (doc.contains("default_scores")) {
      model.set_default_scores(doc["default_scores"].get<std::vector<float>>());
    }
    if (doc.contains("phase")) {
      const auto& phase = doc["phase"];
      model.enable_phase(phase.value("trigger", std::string("\n\n")));
      for (const auto& row : phase.value("rows", nlohmann::json::array())) {
        model.set_phase_row(row.at("suffix").get<std::vector<int>>(),
                            row.at("scores").get<std::vector<float>>());
      }
      if (phase.contains("default_scores")) {
        model.set_phase_default_scores(phase["default_scores"].get<std::vector<float>>());
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("scripted model: ") + e.what());
  }
}

ScriptedModel ScriptedModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MalformedFile, "cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedFile, path + ": " + e.what());
  }
  return from_json(doc);
}

}  // namespace parabreak::providers
