#pragma once

/**
 * Corpus ingestion: the three external inputs of an evaluation run.
 *
 * - ObjectLexicon: canonical object classes plus the synonym/plural surface
 *   forms used to spot object mentions in caption text.
 * - GroundTruth: image id -> set of canonical classes truly present.
 * - CaptionRecord: one generated caption, JSONL-persisted.
 *
 * All loaders normalize strings once (lowercase, trim, collapse internal
 * whitespace) so every downstream comparison is exact-string. Loading is
 * deterministic and the results are immutable value types, safe to share
 * across threads.
 */

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "parabreak/error.hpp"

namespace parabreak::corpus {

struct ObjectLexicon {
  // Canonical class names in first-appearance order.
  std::vector<std::string> classes;
  // surface form (possibly multi-word) -> canonical class. Every canonical
  // class maps to itself.
  std::map<std::string, std::string> surface_map;
  // Longest surface form measured in words; the mention scanner uses it as
  // its n-gram window.
  std::size_t max_surface_words = 1;

  bool has_class(std::string_view name) const;
};

struct GroundTruth {
  // image id -> canonical classes present in that image.
  std::map<std::string, std::set<std::string>> entries;
};

struct CaptionRecord {
  std::string image_id;
  std::string text;
  std::optional<std::vector<int>> token_ids;
  std::optional<std::string> prompt_id;
  std::string run_id;

  bool operator==(const CaptionRecord&) const = default;
};

// Lowercase (ASCII), trim, collapse internal whitespace runs to one space.
std::string normalize_surface(std::string_view raw);

// Lexicon file: UTF-8 text, one `surface<TAB>class` mapping per line,
// `#` comment lines ignored. Canonical self-entries are added when absent.
ObjectLexicon load_lexicon(const std::filesystem::path& path);

// Build a lexicon directly from (surface, class) pairs; same normalization
// and invariants as load_lexicon.
ObjectLexicon lexicon_from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs);

// Ground-truth file: the subset of the COCO instances schema actually read,
// top-level "images" (id), "annotations" (image_id, category_id),
// "categories" (id, name). Category names are resolved through the lexicon;
// unknown names raise UnknownCategory listing all offenders.
GroundTruth load_ground_truth(const std::filesystem::path& path, const ObjectLexicon& lexicon);

// Captions file: JSON-lines, required keys "image_id" and "caption",
// optional "prompt_id", "run_id", "token_ids". Order preserved.
std::vector<CaptionRecord> load_captions(const std::filesystem::path& path);

std::string caption_to_json_line(const CaptionRecord& record);
CaptionRecord caption_from_json_line(const std::string& line, std::size_t line_no);

void save_captions(const std::filesystem::path& path, const std::vector<CaptionRecord>& records);

}  // namespace parabreak::corpus
