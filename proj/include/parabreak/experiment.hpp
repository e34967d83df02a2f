#pragma once

/**
 * Batch orchestration: declarative experiment plans, run artifacts with full
 * provenance, equal-length comparison, and table rendering.
 *
 * A plan is a JSON file naming the provider, prompt template, strategy,
 * interventions, image ids, seed, and output paths; the CLI never accepts
 * unrecorded parameters, so every number in a rendered report traces back
 * to a stored plan plus a caption file. Runs persist captions as they
 * complete and resume without duplicating lines.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "parabreak/chair.hpp"
#include "parabreak/corpus.hpp"
#include "parabreak/decode.hpp"

namespace parabreak::runner {

struct ProviderSpec {
  enum class Kind { demo_toy, scripted, endpoint };
  Kind kind = Kind::demo_toy;
  // scripted
  std::string path;
  // endpoint
  std::string base_url;
  std::string model_name;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string manifest_path;
  int timeout_ms = 30000;
  int max_retries = 3;

  nlohmann::json to_json() const;
  static ProviderSpec from_json(const nlohmann::json& doc);
};

struct ExperimentPlan {
  std::string name;
  ProviderSpec provider;
  std::string prompt_id = "BASE";
  std::string custom_prompt;  // used when prompt_id == "custom"
  std::string prompt_prefix;  // raw prefix; per-model wrapping is the user's business
  decode::Strategy strategy = decode::Strategy::greedy;
  std::optional<double> temperature;  // sample; defaults recorded at run time
  std::optional<double> top_p;
  std::optional<int> beam_width;
  std::optional<double> miho_lambda;  // unset = no output-side mitigation
  std::optional<int> attack_k;        // unset = no injection
  int max_new_tokens = 64;
  std::uint64_t seed = 0;
  std::vector<std::string> image_ids;
  std::string truth_path;
  std::string lexicon_path;
  std::string captions_out;
  std::string artifact_out;
  std::optional<std::string> traces_out;
  int workers = 0;  // 0 = pick a small pool automatically

  nlohmann::json to_json() const;
  static ExperimentPlan from_json(const nlohmann::json& doc);
  static ExperimentPlan load(const std::string& path);
  void save(const std::string& path) const;
};

// Equal-length pairing stored inside the method run's artifact.
struct LengthMatchedPair {
  std::string original_artifact_path;
  chair::ChairReport truncated_original;
  chair::ChairReport method;
};

struct RunArtifact {
  ExperimentPlan plan;  // snapshot, including any CLI overrides
  std::string captions_path;
  chair::ChairReport overall;
  chair::ChairReport before_break;
  chair::ChairReport after_break;
  std::optional<LengthMatchedPair> length_matched;
  std::string started_at;
  std::string finished_at;
  std::string toolkit_version;

  nlohmann::json to_json() const;
  static RunArtifact from_json(const nlohmann::json& doc);
  static RunArtifact load(const std::string& path);
  void save(const std::string& path) const;
};

chair::ChairReport report_from_json(const nlohmann::json& doc);

// Generate one caption per plan image id, persist them, and compute the
// overall/before/after reports. Deterministic given the plan seed and a
// deterministic provider; existing caption lines are kept and only missing
// image ids are generated.
RunArtifact run_experiment(const ExperimentPlan& plan);

// Per image, truncate the original caption to the method caption's word
// count, then evaluate both groups. Image id sets must match.
std::pair<chair::ChairReport, chair::ChairReport> compare_equal_length(
    const RunArtifact& original, const RunArtifact& method);

// Compute the pair, store it in `method`, and rewrite its artifact file.
void attach_equal_length(RunArtifact& method, const RunArtifact& original);

// Re-evaluate the persisted captions and check the stored reports match
// bit-exactly (length-matched pair included when present).
bool verify_artifact(const RunArtifact& artifact);

enum class ReportFormat { text, csv, json };

ReportFormat report_format_from_string(std::string_view name);

// Rows = artifact names, columns = caption/instance percentage pairs per
// strategy, two decimals, byte-stable for fixed input. Text rows look like
// "Original 48.56 13.00"; empty groups render an em dash.
std::string render_report(const std::vector<RunArtifact>& artifacts, ReportFormat format);

}  // namespace parabreak::runner
