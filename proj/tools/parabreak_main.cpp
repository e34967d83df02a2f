#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "parabreak/chair.hpp"
#include "parabreak/corpus.hpp"
#include "parabreak/demo.hpp"
#include "parabreak/experiment.hpp"
#include "parabreak/version.hpp"

namespace fs = std::filesystem;
using namespace parabreak;

namespace {

void write_or_print(const std::optional<std::string>& out_path, const std::string& content) {
  if (out_path) {
    std::ofstream out(*out_path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::MalformedFile, "cannot write " + *out_path);
    out << content;
  } else {
    std::cout << content;
  }
}

std::optional<double> parse_lambda(const std::string& text) {
  if (text.empty()) return std::nullopt;
  if (text == "inf" || text == "+inf" || text == "infinity") {
    return std::numeric_limits<double>::infinity();
  }
  return std::stod(text);
}

struct EvalGroups {
  chair::ChairReport overall;
  chair::ChairReport before_break;
  chair::ChairReport after_break;
};

std::string render_groups(const EvalGroups& groups, runner::ReportFormat format) {
  const std::vector<std::pair<std::string, const chair::ChairReport*>> rows = {
      {"overall", &groups.overall},
      {"before_break", &groups.before_break},
      {"after_break", &groups.after_break}};
  switch (format) {
    case runner::ReportFormat::csv:
      return chair::reports_to_csv(rows);
    case runner::ReportFormat::json: {
      nlohmann::json doc;
      for (const auto& [name, report] : rows) doc[name] = chair::report_to_json(*report);
      return doc.dump(2) + "\n";
    }
    case runner::ReportFormat::text: {
      std::string out = "group caption% instance%\n";
      for (const auto& [name, report] : rows) {
        char caption[32];
        char instance[32];
        std::snprintf(caption, sizeof(caption), "%.2f", report->caption_rate_pct());
        std::snprintf(instance, sizeof(instance), "%.2f", report->instance_rate_pct());
        out += name;
        out += ' ';
        out += report->caption_rate_defined ? caption : "—";
        out += ' ';
        out += report->instance_rate_defined ? instance : "—";
        out += '\n';
      }
      return out;
    }
  }
  return {};
}

// Shared --plan override plumbing for generate/attack.
struct PlanOverrides {
  std::optional<std::uint64_t> seed;
  std::string lambda_text;
  std::optional<int> attack_k;
  std::string prompt_id;
  std::string strategy;
  std::string out_dir;

  void apply(runner::ExperimentPlan& plan) const {
    if (seed) plan.seed = *seed;
    if (!lambda_text.empty()) plan.miho_lambda = parse_lambda(lambda_text);
    if (attack_k) plan.attack_k = *attack_k;
    if (!prompt_id.empty()) plan.prompt_id = prompt_id;
    if (!strategy.empty()) plan.strategy = decode::strategy_from_string(strategy);
    if (!out_dir.empty()) {
      fs::path base(out_dir);
      plan.captions_out = (base / fs::path(plan.captions_out).filename()).string();
      plan.artifact_out = (base / fs::path(plan.artifact_out).filename()).string();
      if (plan.traces_out) {
        plan.traces_out = (base / fs::path(*plan.traces_out).filename()).string();
      }
    }
  }
};

void add_override_flags(CLI::App* cmd, PlanOverrides& overrides) {
  cmd->add_option("--seed", overrides.seed, "Override the plan seed");
  cmd->add_option("--lambda", overrides.lambda_text,
                  "Newline penalty strength (number or 'inf')");
  cmd->add_option("--attack-k", overrides.attack_k, "Inject \\n\\n after the k-th period");
  cmd->add_option("--prompt", overrides.prompt_id, "Prompt template id")
      ->check(CLI::IsMember({"BASE", "P1", "P2", "P3", "P4", "P5", "custom"}));
  cmd->add_option("--strategy", overrides.strategy, "Decoding strategy")
      ->check(CLI::IsMember({"greedy", "sample", "beam"}));
  cmd->add_option("--out", overrides.out_dir, "Directory for caption/artifact outputs");
}

int run_plan_command(const std::string& plan_path, const PlanOverrides& overrides,
                     bool require_attack) {
  runner::ExperimentPlan plan = runner::ExperimentPlan::load(plan_path);
  overrides.apply(plan);
  if (require_attack && !plan.attack_k) {
    throw Error(ErrorKind::InvalidConfig, "attack requires --attack-k or a plan with attack_k");
  }
  runner::RunArtifact artifact = runner::run_experiment(plan);
  char caption[32];
  char instance[32];
  std::snprintf(caption, sizeof(caption), "%.2f", artifact.overall.caption_rate_pct());
  std::snprintf(instance, sizeof(instance), "%.2f", artifact.overall.instance_rate_pct());
  std::cout << "run '" << plan.name << "': " << artifact.overall.n_captions
            << " captions, caption rate " << caption << "%, instance rate " << instance << "%\n"
            << "artifact: " << plan.artifact_out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"paragraph-break hallucination analysis toolkit"};
  app.set_version_flag("--version", kToolkitVersion);
  app.require_subcommand(1);

  // eval
  std::string captions_path, truth_path, lexicon_path, format_name = "text";
  std::optional<std::string> out_path;
  auto* eval = app.add_subcommand("eval", "Evaluate a caption file against ground truth");
  eval->add_option("--captions", captions_path, "Caption JSONL file")->required();
  eval->add_option("--truth", truth_path, "Ground-truth annotations JSON")->required();
  eval->add_option("--lexicon", lexicon_path, "Object lexicon TSV")->required();
  eval->add_option("--out", out_path, "Write the report here instead of stdout");
  eval->add_option("--format", format_name, "Output format")
      ->check(CLI::IsMember({"text", "csv", "json"}));

  // generate / attack
  std::string plan_path;
  PlanOverrides gen_overrides;
  auto* generate = app.add_subcommand("generate", "Run an experiment plan");
  generate->add_option("--plan", plan_path, "Experiment plan JSON")->required();
  add_override_flags(generate, gen_overrides);

  std::string attack_plan_path;
  PlanOverrides attack_overrides;
  auto* attack = app.add_subcommand("attack", "Run a plan with paragraph-break injection");
  attack->add_option("--plan", attack_plan_path, "Experiment plan JSON")->required();
  add_override_flags(attack, attack_overrides);

  // compare-length
  std::string original_artifact, method_artifact, compare_format = "text";
  std::optional<std::string> compare_out;
  auto* compare = app.add_subcommand(
      "compare-length", "Equal-length comparison of two runs (original truncated to method)");
  compare->add_option("original", original_artifact, "Original run artifact JSON")->required();
  compare->add_option("method", method_artifact, "Method run artifact JSON")->required();
  compare->add_option("--format", compare_format, "Output format")
      ->check(CLI::IsMember({"text", "csv", "json"}));
  compare->add_option("--out", compare_out, "Write the report here instead of stdout");

  // report
  std::vector<std::string> artifact_paths;
  std::string report_format = "text";
  std::optional<std::string> report_out;
  auto* report = app.add_subcommand("report", "Render a table from run artifacts");
  report->add_option("artifacts", artifact_paths, "Run artifact JSON files")->required();
  report->add_option("--format", report_format, "Output format")
      ->check(CLI::IsMember({"text", "csv", "json"}));
  report->add_option("--out", report_out, "Write the report here instead of stdout");

  // demo
  std::string demo_dir = "demo_out";
  std::uint64_t demo_seed = 17;
  int demo_images = 500;
  auto* demo = app.add_subcommand("demo", "Run the offline toy-world demo end to end");
  demo->add_option("--out", demo_dir, "Output directory");
  demo->add_option("--seed", demo_seed, "Demo seed");
  demo->add_option("--images", demo_images, "Number of synthetic images");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval) {
      auto lexicon = corpus::load_lexicon(lexicon_path);
      auto truth = corpus::load_ground_truth(truth_path, lexicon);
      auto records = corpus::load_captions(captions_path);
      EvalGroups groups;
      groups.overall = chair::compute_chair(records, lexicon, truth);
      std::tie(groups.before_break, groups.after_break) =
          chair::segment_chair(records, lexicon, truth);
      write_or_print(out_path, render_groups(groups, runner::report_format_from_string(format_name)));
      return 0;
    }
    if (*generate) return run_plan_command(plan_path, gen_overrides, false);
    if (*attack) return run_plan_command(attack_plan_path, attack_overrides, true);
    if (*compare) {
      auto original = runner::RunArtifact::load(original_artifact);
      auto method = runner::RunArtifact::load(method_artifact);
      auto [truncated, method_report] = runner::compare_equal_length(original, method);
      const std::vector<std::pair<std::string, const chair::ChairReport*>> rows = {
          {"original_truncated", &truncated}, {"method", &method_report}};
      std::string rendered;
      switch (runner::report_format_from_string(compare_format)) {
        case runner::ReportFormat::csv:
          rendered = chair::reports_to_csv(rows);
          break;
        case runner::ReportFormat::json: {
          nlohmann::json doc;
          for (const auto& [name, rep] : rows) doc[name] = chair::report_to_json(*rep);
          rendered = doc.dump(2) + "\n";
          break;
        }
        case runner::ReportFormat::text: {
          rendered = "group caption% instance%\n";
          for (const auto& [name, rep] : rows) {
            char caption[32];
            char instance[32];
            std::snprintf(caption, sizeof(caption), "%.2f", rep->caption_rate_pct());
            std::snprintf(instance, sizeof(instance), "%.2f", rep->instance_rate_pct());
            rendered += name;
            rendered += ' ';
            rendered += rep->caption_rate_defined ? caption : "—";
            rendered += ' ';
            rendered += rep->instance_rate_defined ? instance : "—";
            rendered += '\n';
          }
          break;
        }
      }
      write_or_print(compare_out, rendered);
      return 0;
    }
    if (*report) {
      std::vector<runner::RunArtifact> artifacts;
      for (const auto& path : artifact_paths) {
        artifacts.push_back(runner::RunArtifact::load(path));
      }
      write_or_print(report_out, runner::render_report(
                                     artifacts, runner::report_format_from_string(report_format)));
      return 0;
    }
    if (*demo) {
      auto result = runner::demo::run_demo(demo_dir, demo_seed, demo_images);
      bool verified = true;
      for (const auto& artifact : result.artifacts) {
        verified = verified && runner::verify_artifact(artifact);
      }
      std::cout << result.report_text;
      for (const auto& artifact : result.artifacts) {
        if (artifact.plan.name == "Original") {
          char before[32];
          char after[32];
          std::snprintf(before, sizeof(before), "%.2f",
                        artifact.before_break.instance_rate_pct());
          std::snprintf(after, sizeof(after), "%.2f", artifact.after_break.instance_rate_pct());
          std::cout << "Original instance rate before the break " << before << "%, after "
                    << after << "%\n";
        }
      }
      std::cout << "artifacts under " << demo_dir << "/runs, recompute check "
                << (verified ? "passed" : "FAILED") << "\n";
      return verified ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
