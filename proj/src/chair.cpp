#include "parabreak/chair.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace parabreak::chair {

namespace {

struct WordToken {
  std::size_t begin;
  std::size_t end;
  std::string lower;
};

bool is_word_char(unsigned char c) {
  return std::isalnum(c) != 0;
}

std::vector<WordToken> tokenize_words(std::string_view text) {
  std::vector<WordToken> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_char(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    std::string lower;
    while (i < text.size() && is_word_char(static_cast<unsigned char>(text[i]))) {
      lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
      ++i;
    }
    tokens.push_back({begin, i, std::move(lower)});
  }
  return tokens;
}

// Exact lookup, then plural folding on the joined candidate: drop a trailing
// "s", then a trailing "es". Irregular plurals belong in the lexicon file.
const std::string* lookup_folded(const ObjectLexicon& lexicon, const std::string& candidate) {
  auto it = lexicon.surface_map.find(candidate);
  if (it != lexicon.surface_map.end()) return &it->second;
  if (candidate.size() > 1 && candidate.back() == 's') {
    it = lexicon.surface_map.find(candidate.substr(0, candidate.size() - 1));
    if (it != lexicon.surface_map.end()) return &it->second;
  }
  if (candidate.size() > 2 && candidate.ends_with("es")) {
    it = lexicon.surface_map.find(candidate.substr(0, candidate.size() - 2));
    if (it != lexicon.surface_map.end()) return &it->second;
  }
  return nullptr;
}

double safe_rate(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string format_pct(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", ratio * 100.0);
  return buf;
}

}  // namespace

MentionSet extract_mentions(std::string_view text, const ObjectLexicon& lexicon) {
  MentionSet result;
  const auto tokens = tokenize_words(text);
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t matched = 0;
    std::size_t max_n = std::min(lexicon.max_surface_words, tokens.size() - i);
    for (std::size_t n = max_n; n >= 1; --n) {
      std::string candidate = tokens[i].lower;
      for (std::size_t j = 1; j < n; ++j) {
        candidate += ' ';
        candidate += tokens[i + j].lower;
      }
      if (const std::string* cls = lookup_folded(lexicon, candidate)) {
        result.mentions.push_back(
            {std::move(candidate), *cls, tokens[i].begin, tokens[i + n - 1].end});
        result.classes.insert(*cls);
        matched = n;
        break;
      }
    }
    i += matched ? matched : 1;
  }
  return result;
}

std::pair<std::set<std::string>, std::set<std::string>> judge_caption(const CaptionRecord& record,
                                                                      const MentionSet& mentions,
                                                                      const GroundTruth& truth) {
  auto it = truth.entries.find(record.image_id);
  if (it == truth.entries.end()) {
    throw Error(ErrorKind::UnknownImage, "image '" + record.image_id + "' not in ground truth");
  }
  std::set<std::string> hallucinated;
  for (const auto& cls : mentions.classes) {
    if (!it->second.contains(cls)) hallucinated.insert(cls);
  }
  return {std::move(hallucinated), mentions.classes};
}

ChairReport compute_chair(std::span<const CaptionRecord> records, const ObjectLexicon& lexicon,
                          const GroundTruth& truth) {
  ChairReport report;
  for (const auto& record : records) {
    auto truth_it = truth.entries.find(record.image_id);
    if (truth_it == truth.entries.end()) {
      throw Error(ErrorKind::UnknownImage,
                  "image '" + record.image_id + "' not in ground truth (caption #" +
                      std::to_string(report.n_captions + 1) + ")");
    }
    MentionSet mentions = extract_mentions(record.text, lexicon);
    std::set<std::string> hallucinated;
    std::size_t bad_instances = 0;
    for (const auto& mention : mentions.mentions) {
      if (!truth_it->second.contains(mention.cls)) {
        ++bad_instances;
        hallucinated.insert(mention.cls);
      }
    }
    report.n_captions += 1;
    report.n_mentions += mentions.mentions.size();
    report.n_mentions_hallucinated += bad_instances;
    if (!hallucinated.empty()) report.n_captions_hallucinated += 1;
    report.per_caption.emplace_back(record.image_id, std::move(hallucinated));
  }
  report.caption_rate_defined = report.n_captions > 0;
  report.instance_rate_defined = report.n_mentions > 0;
  report.chair_caption_rate = safe_rate(report.n_captions_hallucinated, report.n_captions);
  report.chair_instance_rate = safe_rate(report.n_mentions_hallucinated, report.n_mentions);
  return report;
}

SegmentSplit split_at_paragraph_break(std::string_view text) {
  SegmentSplit split;
  std::size_t pos = text.find("\n\n");
  if (pos == std::string_view::npos) {
    split.before = std::string(text);
    return split;
  }
  split.before = std::string(text.substr(0, pos));
  split.after = std::string(text.substr(pos + 2));
  split.break_found = true;
  split.break_char_offset = pos;
  return split;
}

std::pair<ChairReport, ChairReport> segment_chair(std::span<const CaptionRecord> records,
                                                  const ObjectLexicon& lexicon,
                                                  const GroundTruth& truth) {
  std::vector<CaptionRecord> before_group;
  std::vector<CaptionRecord> after_group;
  before_group.reserve(records.size());
  for (const auto& record : records) {
    SegmentSplit split = split_at_paragraph_break(record.text);
    CaptionRecord before = record;
    before.text = split.before;
    before.token_ids.reset();
    before_group.push_back(std::move(before));
    if (split.break_found && !split.after.empty()) {
      CaptionRecord after = record;
      after.text = split.after;
      after.token_ids.reset();
      after_group.push_back(std::move(after));
    }
  }
  return {compute_chair(before_group, lexicon, truth), compute_chair(after_group, lexicon, truth)};
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

CaptionRecord truncate_to_match(const CaptionRecord& reference, std::size_t target_len) {
  const std::string& text = reference.text;
  CaptionRecord out = reference;
  out.token_ids.reset();
  if (word_count(text) <= target_len) {
    return out;  // identity, including any trailing whitespace
  }
  if (target_len == 0) {
    out.text.clear();
    return out;
  }

  // Sentence = maximal span ending in '.', '!' or '?' followed by whitespace
  // or end of string; a trailing fragment counts as a final sentence.
  struct Sentence {
    std::size_t end;
    std::size_t words;
  };
  std::vector<Sentence> sentences;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    bool terminal = (c == '.' || c == '!' || c == '?');
    bool at_boundary =
        terminal && (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (at_boundary) {
      sentences.push_back({i + 1, word_count(std::string_view(text).substr(start, i + 1 - start))});
      start = i + 1;
    }
  }
  if (start < text.size()) {
    std::string_view tail = std::string_view(text).substr(start);
    if (word_count(tail) > 0) sentences.push_back({text.size(), word_count(tail)});
  }

  std::size_t used = 0;
  std::size_t cut = 0;
  for (const auto& sentence : sentences) {
    if (used + sentence.words > target_len) break;
    used += sentence.words;
    cut = sentence.end;
  }
  if (cut == 0) {
    // First sentence alone exceeds the budget: cut at exactly target_len words.
    std::size_t seen = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (std::isspace(static_cast<unsigned char>(text[i]))) {
        in_word = false;
      } else {
        if (!in_word) {
          in_word = true;
          ++seen;
        }
        if (seen == target_len) cut = i + 1;
      }
      if (seen > target_len) break;
    }
  }
  out.text = text.substr(0, cut);
  return out;
}

nlohmann::json report_to_json(const ChairReport& report) {
  nlohmann::json per_caption = nlohmann::json::array();
  for (const auto& [image_id, classes] : report.per_caption) {
    per_caption.push_back({{"image_id", image_id}, {"hallucinated_classes", classes}});
  }
  return nlohmann::json{{"n_captions", report.n_captions},
                        {"n_captions_hallucinated", report.n_captions_hallucinated},
                        {"n_mentions", report.n_mentions},
                        {"n_mentions_hallucinated", report.n_mentions_hallucinated},
                        {"chair_caption_rate", report.chair_caption_rate},
                        {"chair_instance_rate", report.chair_instance_rate},
                        {"caption_rate_defined", report.caption_rate_defined},
                        {"instance_rate_defined", report.instance_rate_defined},
                        {"per_caption", std::move(per_caption)}};
}

std::string reports_to_csv(const std::vector<std::pair<std::string, const ChairReport*>>& groups) {
  std::string csv = "group,n_captions,caption_rate_pct,instance_rate_pct\n";
  for (const auto& [name, report] : groups) {
    csv += name;
    csv += ',';
    csv += std::to_string(report->n_captions);
    csv += ',';
    csv += format_pct(report->chair_caption_rate);
    csv += ',';
    csv += format_pct(report->chair_instance_rate);
    csv += '\n';
  }
  return csv;
}

}  // namespace parabreak::chair
