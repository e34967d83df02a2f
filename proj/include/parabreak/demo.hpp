#pragma once

/**
 * Self-contained offline demo: a scripted toy model whose post-break phase
 * emits off-ground-truth objects with elevated probability, plus matching
 * synthetic ground truth and a small lexicon. The demo runs the full
 * pipeline in seconds: original, MiHO, MiHI, MiHO+MiHI, and Attack-1..3
 * plans, each persisted with captions, artifact, and rendered reports.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "parabreak/corpus.hpp"
#include "parabreak/experiment.hpp"
#include "parabreak/scripted_model.hpp"

namespace parabreak::runner::demo {

// Phase-shift toy model: clean first sentence, topic drift on later
// sentences, and a hallucination-heavy table once "\n\n" enters the context.
providers::ScriptedModel build_demo_model();

corpus::ObjectLexicon build_demo_lexicon();

std::vector<std::string> demo_image_ids(int n_images);

// Writes lexicon.tsv and truth.json (COCO-subset schema) under dir.
void write_demo_world(const std::string& dir, int n_images);

// The eight demo plans over the shared toy world.
std::vector<ExperimentPlan> build_demo_plans(const std::string& dir, std::uint64_t seed,
                                             int n_images);

struct DemoResult {
  std::vector<RunArtifact> artifacts;
  std::string report_text;
};

DemoResult run_demo(const std::string& dir, std::uint64_t seed, int n_images = 500);

}  // namespace parabreak::runner::demo
