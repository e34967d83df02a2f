#pragma once

/**
 * CHAIR-style object hallucination metrics.
 *
 * Pipeline: extract object mentions from caption text against a lexicon,
 * judge them against per-image ground truth, and aggregate the two standard
 * rates: the fraction of captions that contain at least one hallucinated
 * object, and the fraction of mention instances that are hallucinated.
 *
 * Also carries the paragraph-break analyses: splitting captions at the
 * first "\n\n" into a before/after group pair, and whole-sentence
 * truncation for equal-length comparisons.
 *
 * All operations are pure; per-caption work is an associative fold, so the
 * aggregates are invariant under record reordering.
 */

#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "parabreak/corpus.hpp"

namespace parabreak::chair {

using corpus::CaptionRecord;
using corpus::GroundTruth;
using corpus::ObjectLexicon;

struct Mention {
  std::string surface;     // matched document text, normalized
  std::string cls;         // canonical class from the lexicon
  std::size_t begin = 0;   // byte span in the original text, [begin, end)
  std::size_t end = 0;

  bool operator==(const Mention&) const = default;
};

struct MentionSet {
  std::vector<Mention> mentions;     // non-overlapping, ordered by start offset
  std::set<std::string> classes;     // canonical classes mentioned
};

struct ChairReport {
  std::size_t n_captions = 0;
  std::size_t n_captions_hallucinated = 0;
  std::size_t n_mentions = 0;
  std::size_t n_mentions_hallucinated = 0;
  // Ratios in [0, 1]; 0 with the defined flag cleared when the denominator
  // is zero (segment groups legitimately come up empty).
  double chair_caption_rate = 0.0;
  double chair_instance_rate = 0.0;
  bool caption_rate_defined = false;
  bool instance_rate_defined = false;
  std::vector<std::pair<std::string, std::set<std::string>>> per_caption;  // (image_id, hallucinated)

  double caption_rate_pct() const { return chair_caption_rate * 100.0; }
  double instance_rate_pct() const { return chair_instance_rate * 100.0; }
};

struct SegmentSplit {
  std::string before;
  std::string after;
  bool break_found = false;
  std::optional<std::size_t> break_char_offset;
};

// Greedy longest-match, left-to-right scan over word tokens. Multi-word
// surface forms win over their sub-words; a trailing "s"/"es" is stripped
// and retried when there is no exact match. Spans index the original text.
MentionSet extract_mentions(std::string_view text, const ObjectLexicon& lexicon);

// hallucinated = mentioned classes minus the image's ground-truth classes.
std::pair<std::set<std::string>, std::set<std::string>> judge_caption(const CaptionRecord& record,
                                                                      const MentionSet& mentions,
                                                                      const GroundTruth& truth);

ChairReport compute_chair(std::span<const CaptionRecord> records, const ObjectLexicon& lexicon,
                          const GroundTruth& truth);

// Split at the FIRST "\n\n"; later breaks stay inside `after` verbatim.
SegmentSplit split_at_paragraph_break(std::string_view text);

// Before-group: every caption's text up to the first break (whole text when
// no break). After-group: the non-empty remainders only.
std::pair<ChairReport, ChairReport> segment_chair(std::span<const CaptionRecord> records,
                                                  const ObjectLexicon& lexicon,
                                                  const GroundTruth& truth);

// Longest whole-sentence prefix whose word count fits target_len; if even
// the first sentence is too long, cut at exactly target_len words.
CaptionRecord truncate_to_match(const CaptionRecord& reference, std::size_t target_len);

std::size_t word_count(std::string_view text);

nlohmann::json report_to_json(const ChairReport& report);

// CSV rows `group,n_captions,caption_rate_pct,instance_rate_pct` with rates
// rounded to 2 decimals; undefined rates print as 0.00.
std::string reports_to_csv(const std::vector<std::pair<std::string, const ChairReport*>>& groups);

}  // namespace parabreak::chair
