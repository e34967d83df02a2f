#pragma once

// Test-only oracle for the CHAIR metrics: mini-corpora are built
// constructively (captions are assembled from lexicon surface forms and
// filler words, recording exactly which classes were inserted), so the
// expected mention list is known without running any extraction code. The
// aggregate counts are then accumulated with plain hand loops.

#include <random>
#include <set>
#include <string>
#include <vector>

#include "parabreak/corpus.hpp"

namespace oracle {

struct InsertedMention {
  std::string cls;
};

struct BuiltCaption {
  std::string image_id;
  std::string text;
  std::vector<InsertedMention> inserted;  // expected mentions, in order
};

struct MiniCorpus {
  parabreak::corpus::ObjectLexicon lexicon;
  parabreak::corpus::GroundTruth truth;
  std::vector<parabreak::corpus::CaptionRecord> records;
  std::vector<BuiltCaption> built;
};

struct ExpectedChair {
  std::size_t n_captions = 0;
  std::size_t n_captions_hallucinated = 0;
  std::size_t n_mentions = 0;
  std::size_t n_mentions_hallucinated = 0;
  double caption_rate = 0.0;
  double instance_rate = 0.0;
};

// Class pool with a multi-word form and synonyms; inserting a surface form
// may use the canonical name, a synonym, or a pluralized variant, all of
// which the matcher must resolve to the same class.
inline MiniCorpus random_mini_corpus(std::mt19937_64& rng) {
  using parabreak::corpus::CaptionRecord;

  struct PoolEntry {
    const char* cls;
    std::vector<const char*> surfaces;
  };
  static const std::vector<PoolEntry> pool = {
      {"dog", {"dog", "puppy"}},
      {"cat", {"cat", "kitten"}},
      {"traffic light", {"traffic light", "stoplight"}},
      {"bus", {"bus"}},
      {"bear", {"bear", "cub"}},
  };
  static const std::vector<const char*> fillers = {"the", "very", "red", "near", "qq"};

  auto pick = [&rng](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

  // 2..5 classes.
  std::size_t n_classes = 2 + pick(4);
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < pool.size() && chosen.size() < n_classes; ++i) chosen.push_back(i);
  for (std::size_t i = 0; i < chosen.size(); ++i) std::swap(chosen[i], chosen[pick(chosen.size())]);

  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t idx : chosen) {
    for (const char* surface : pool[idx].surfaces) {
      pairs.emplace_back(surface, pool[idx].cls);
    }
  }

  MiniCorpus corpus;
  corpus.lexicon = parabreak::corpus::lexicon_from_pairs(pairs);

  std::size_t n_captions = 1 + pick(10);
  for (std::size_t c = 0; c < n_captions; ++c) {
    BuiltCaption built;
    built.image_id = "img" + std::to_string(c);

    // Ground truth: random subset of the chosen classes.
    std::set<std::string> present;
    for (std::size_t idx : chosen) {
      if (rng() % 2 == 0) present.insert(pool[idx].cls);
    }
    corpus.truth.entries[built.image_id] = present;

    std::size_t n_inserts = pick(7);  // 0..6 mentions
    std::string text;
    for (std::size_t m = 0; m < n_inserts; ++m) {
      text += fillers[pick(fillers.size())];
      text += ' ';
      const PoolEntry& entry = pool[chosen[pick(chosen.size())]];
      std::string surface = entry.surfaces[pick(entry.surfaces.size())];
      if (rng() % 3 == 0) surface += 's';  // plural variant folds back
      text += surface;
      if (rng() % 4 == 0) {
        text += '.';
      }
      text += ' ';
      built.inserted.push_back({entry.cls});
    }
    text += fillers[pick(fillers.size())];
    built.text = text;

    CaptionRecord record;
    record.image_id = built.image_id;
    record.text = built.text;
    corpus.records.push_back(record);
    corpus.built.push_back(std::move(built));
  }
  return corpus;
}

// Brute-force aggregation from the construction record: no extraction, no
// shared code with the implementation under test.
inline ExpectedChair enumerate_expected(const MiniCorpus& corpus) {
  ExpectedChair expected;
  for (const auto& built : corpus.built) {
    expected.n_captions += 1;
    const auto& present = corpus.truth.entries.at(built.image_id);
    bool any_hallucinated = false;
    for (const auto& mention : built.inserted) {
      expected.n_mentions += 1;
      bool in_truth = false;
      for (const auto& cls : present) {
        if (cls == mention.cls) in_truth = true;
      }
      if (!in_truth) {
        expected.n_mentions_hallucinated += 1;
        any_hallucinated = true;
      }
    }
    if (any_hallucinated) expected.n_captions_hallucinated += 1;
  }
  expected.caption_rate = expected.n_captions == 0
                              ? 0.0
                              : static_cast<double>(expected.n_captions_hallucinated) /
                                    static_cast<double>(expected.n_captions);
  expected.instance_rate = expected.n_mentions == 0
                               ? 0.0
                               : static_cast<double>(expected.n_mentions_hallucinated) /
                                     static_cast<double>(expected.n_mentions);
  return expected;
}

}  // namespace oracle
