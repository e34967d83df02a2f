#include "parabreak/demo.hpp"

#include <filesystem>
#include <fstream>

#include "parabreak/prompts.hpp"

namespace parabreak::runner::demo {

namespace fs = std::filesystem;

namespace {

// Sentence tokens. Ground truth for every demo image is {dog, frisbee}
// (every tenth image also truly contains a cat), so cat/tree/car mentions
// are the hallucination material.
constexpr const char* kEos = "<eos>";
constexpr const char* kPeriod = ".";
constexpr const char* kNewline = "\n";
constexpr const char* kDogFrisbee = " A dog plays with a frisbee";
constexpr const char* kDogRest = " The dog rests";
constexpr const char* kCatTree = " A cat sits on a tree";
constexpr const char* kCatFrisbee = " A cat chases a frisbee";
constexpr const char* kCar = " A car parks here";
constexpr const char* kScene = " The scene is calm";
constexpr const char* kMihiDog = " The dog plays with a frisbee";
constexpr const char* kMihiCat = " The cat naps";
constexpr const char* kPostCat = " A second cat appears";
constexpr const char* kPostTree = " A tall tree stands nearby";
constexpr const char* kPostCar = " A car waits outside";
constexpr const char* kPostDog = " The dog looks around";

std::vector<std::string> prompt_texts() {
  std::vector<std::string> prompts;
  prompts.push_back(render_prompt(make_template("BASE"), kBaseInstruction));
  for (const char* id : {"P1", "P2", "P3", "P4", "P5"}) {
    prompts.push_back(render_prompt(make_template(id), kBaseInstruction));
  }
  return prompts;
}

}  // namespace

providers::ScriptedModel build_demo_model() {
  std::vector<std::string> vocab = {kEos,     kPeriod,  kNewline,    kDogFrisbee, kDogRest,
                                    kCatTree, kCatFrisbee, kCar,     kScene,      kMihiDog,
                                    kMihiCat, kPostCat, kPostTree,   kPostCar,    kPostDog};
  const auto prompts = prompt_texts();
  vocab.insert(vocab.end(), prompts.begin(), prompts.end());

  providers::ScriptedModel model(std::move(vocab), kEos, /*suffix_len=*/2);

  // Anything unscripted closes the current sentence.
  model.set_default_scores(model.row_from_probs({{kPeriod, 0.995}, {kEos, 0.005}}));

  // First sentence, one row per prompt. The base instruction opens with a
  // mostly faithful sentence; the P1-P5 instructions steer into the
  // break-averse chain.
  const auto base_start = model.row_from_probs(
      {{kDogFrisbee, 0.80}, {kCatTree, 0.12}, {kCatFrisbee, 0.08}});
  const auto mihi_start = model.row_from_probs({{kMihiDog, 0.75}, {kMihiCat, 0.25}});
  model.set_row_text({prompts[0]}, base_start);
  for (std::size_t i = 1; i < prompts.size(); ++i) {
    model.set_row_text({prompts[i]}, mihi_start);
  }

  // Sentence-to-sentence chain. Roughly half the probability mass wants to
  // open a new paragraph; the rest drifts: faithful dog sentences give way
  // to cat/car material around sentences two and three, then the scene
  // tokens drain the topic back toward harmless filler.
  model.set_row_text({kDogFrisbee, kPeriod},
                     model.row_from_probs({{kNewline, 0.50},
                                           {kEos, 0.05},
                                           {kCatTree, 0.25},
                                           {kCatFrisbee, 0.12},
                                           {kDogRest, 0.08}}));
  model.set_row_text({kDogRest, kPeriod},
                     model.row_from_probs(
                         {{kNewline, 0.50}, {kEos, 0.10}, {kScene, 0.25}, {kCatTree, 0.15}}));
  model.set_row_text({kCatTree, kPeriod},
                     model.row_from_probs({{kNewline, 0.50},
                                           {kEos, 0.04},
                                           {kCatFrisbee, 0.10},
                                           {kCar, 0.14},
                                           {kScene, 0.22}}));
  model.set_row_text({kCatFrisbee, kPeriod},
                     model.row_from_probs({{kNewline, 0.50},
                                           {kEos, 0.04},
                                           {kCatTree, 0.10},
                                           {kCar, 0.14},
                                           {kScene, 0.22}}));
  model.set_row_text({kCar, kPeriod},
                     model.row_from_probs(
                         {{kNewline, 0.50}, {kEos, 0.05}, {kScene, 0.37}, {kCatTree, 0.08}}));
  model.set_row_text({kScene, kPeriod},
                     model.row_from_probs(
                         {{kNewline, 0.30}, {kEos, 0.32}, {kScene, 0.23}, {kDogRest, 0.15}}));

  // MiHI chain: same shape, but paragraph breaks are rare.
  model.set_row_text({kMihiDog, kPeriod},
                     model.row_from_probs(
                         {{kNewline, 0.05}, {kEos, 0.45}, {kMihiDog, 0.25}, {kMihiCat, 0.25}}));
  model.set_row_text({kMihiCat, kPeriod},
                     model.row_from_probs(
                         {{kNewline, 0.05}, {kEos, 0.50}, {kMihiDog, 0.20}, {kMihiCat, 0.25}}));

  // A started paragraph break almost always completes.
  model.set_row_text({kPeriod, kNewline},
                     model.row_from_probs({{kNewline, 0.98}, {kEos, 0.02}}));

  // Post-break phase: off-ground-truth objects dominate.
  model.enable_phase("\n\n");
  model.set_phase_default_scores(model.row_from_probs({{kPeriod, 0.995}, {kEos, 0.005}}));
  model.set_phase_row_text({kNewline, kNewline},
                           model.row_from_probs({{kPostCat, 0.45},
                                                 {kPostTree, 0.25},
                                                 {kPostCar, 0.20},
                                                 {kPostDog, 0.10}}));
  model.set_phase_row_text({kPostCat, kPeriod},
                           model.row_from_probs({{kEos, 0.52},
                                                 {kPostTree, 0.20},
                                                 {kPostCar, 0.18},
                                                 {kPostDog, 0.10}}));
  model.set_phase_row_text({kPostTree, kPeriod},
                           model.row_from_probs({{kEos, 0.52},
                                                 {kPostCat, 0.22},
                                                 {kPostCar, 0.16},
                                                 {kPostDog, 0.10}}));
  model.set_phase_row_text({kPostCar, kPeriod},
                           model.row_from_probs({{kEos, 0.52},
                                                 {kPostCat, 0.24},
                                                 {kPostTree, 0.14},
                                                 {kPostDog, 0.10}}));
  model.set_phase_row_text({kPostDog, kPeriod},
                           model.row_from_probs(
                               {{kEos, 0.58}, {kPostCat, 0.22}, {kPostTree, 0.20}}));
  // MiHI sentences that slipped past a break keep the same phase behavior.
  model.set_phase_row_text({kMihiDog, kPeriod},
                           model.row_from_probs({{kEos, 0.55}, {kPostCat, 0.45}}));
  model.set_phase_row_text({kMihiCat, kPeriod},
                           model.row_from_probs({{kEos, 0.55}, {kPostCat, 0.45}}));

  return model;
}

corpus::ObjectLexicon build_demo_lexicon() {
  return corpus::lexicon_from_pairs({{"dog", "dog"},
                                     {"puppy", "dog"},
                                     {"cat", "cat"},
                                     {"kitten", "cat"},
                                     {"car", "car"},
                                     {"automobile", "car"},
                                     {"tree", "tree"},
                                     {"frisbee", "frisbee"}});
}

std::vector<std::string> demo_image_ids(int n_images) {
  std::vector<std::string> ids;
  ids.reserve(n_images);
  for (int i = 0; i < n_images; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "img%04d", i);
    ids.emplace_back(buf);
  }
  return ids;
}

void write_demo_world(const std::string& dir, int n_images) {
  fs::create_directories(dir);

  std::ofstream lex(fs::path(dir) / "lexicon.tsv", std::ios::trunc);
  lex << "# demo lexicon: canonical class per line, tab-separated\n";
  for (const auto& [surface, cls] :
       std::vector<std::pair<const char*, const char*>>{{"dog", "dog"},
                                                        {"puppy", "dog"},
                                                        {"cat", "cat"},
                                                        {"kitten", "cat"},
                                                        {"car", "car"},
                                                        {"automobile", "car"},
                                                        {"tree", "tree"},
                                                        {"frisbee", "frisbee"}}) {
    lex << surface << '\t' << cls << '\n';
  }
  lex.close();

  // COCO-subset schema. Category ids: dog 1, frisbee 2, cat 3.
  nlohmann::json truth;
  truth["categories"] = nlohmann::json::array(
      {{{"id", 1}, {"name", "dog"}}, {{"id", 2}, {"name", "frisbee"}}, {{"id", 3}, {"name", "cat"}}});
  truth["images"] = nlohmann::json::array();
  truth["annotations"] = nlohmann::json::array();
  const auto ids = demo_image_ids(n_images);
  for (int i = 0; i < n_images; ++i) {
    truth["images"].push_back({{"id", ids[i]}});
    truth["annotations"].push_back({{"image_id", ids[i]}, {"category_id", 1}});
    truth["annotations"].push_back({{"image_id", ids[i]}, {"category_id", 2}});
    if (i % 10 == 0) {
      truth["annotations"].push_back({{"image_id", ids[i]}, {"category_id", 3}});
    }
  }
  std::ofstream out(fs::path(dir) / "truth.json", std::ios::trunc);
  out << truth.dump(2) << '\n';
}

std::vector<ExperimentPlan> build_demo_plans(const std::string& dir, std::uint64_t seed,
                                             int n_images) {
  const fs::path base(dir);
  ExperimentPlan proto;
  proto.provider.kind = ProviderSpec::Kind::demo_toy;
  proto.strategy = decode::Strategy::sample;
  proto.temperature = 1.0;
  proto.top_p = 1.0;
  proto.max_new_tokens = 48;
  proto.seed = seed;
  proto.image_ids = demo_image_ids(n_images);
  proto.truth_path = (base / "truth.json").string();
  proto.lexicon_path = (base / "lexicon.tsv").string();

  struct Variant {
    const char* name;
    const char* prompt_id;
    bool miho;
    std::optional<int> attack_k;
  };
  // The attack runs pair the injection with the infinite penalty so the
  // injected break is the only paragraph break in the output.
  const std::vector<Variant> variants = {
      {"Original", "BASE", false, std::nullopt}, {"MiHO", "BASE", true, std::nullopt},
      {"MiHI", "P1", false, std::nullopt},       {"MiHO+MiHI", "P1", true, std::nullopt},
      {"Attack-1", "BASE", true, 1},             {"Attack-2", "BASE", true, 2},
      {"Attack-3", "BASE", true, 3},
  };

  std::vector<ExperimentPlan> plans;
  for (const auto& variant : variants) {
    ExperimentPlan plan = proto;
    plan.name = variant.name;
    plan.prompt_id = variant.prompt_id;
    if (variant.miho) plan.miho_lambda = std::numeric_limits<double>::infinity();
    plan.attack_k = variant.attack_k;
    std::string stem = variant.name;
    for (auto& c : stem) {
      if (c == '+') c = '_';
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    plan.captions_out = (base / "runs" / (stem + ".captions.jsonl")).string();
    plan.artifact_out = (base / "runs" / (stem + ".artifact.json")).string();
    plan.traces_out = (base / "runs" / (stem + ".traces.jsonl")).string();
    plans.push_back(std::move(plan));
  }
  return plans;
}

DemoResult run_demo(const std::string& dir, std::uint64_t seed, int n_images) {
  write_demo_world(dir, n_images);
  auto plans = build_demo_plans(dir, seed, n_images);
  fs::create_directories(fs::path(dir) / "plans");
  fs::create_directories(fs::path(dir) / "runs");

  DemoResult result;
  for (auto& plan : plans) {
    std::string stem = fs::path(plan.artifact_out).stem().string();  // e.g. original.artifact
    stem = stem.substr(0, stem.find('.'));
    plan.save((fs::path(dir) / "plans" / (stem + ".json")).string());
    result.artifacts.push_back(run_experiment(plan));
  }

  // Equal-length comparison of each mitigation against the original run.
  for (auto& artifact : result.artifacts) {
    if (artifact.plan.name == "MiHO" || artifact.plan.name == "MiHI" ||
        artifact.plan.name == "MiHO+MiHI") {
      attach_equal_length(artifact, result.artifacts.front());
    }
  }

  result.report_text = render_report(result.artifacts, ReportFormat::text);
  std::ofstream text(fs::path(dir) / "report.txt", std::ios::trunc);
  text << result.report_text;
  std::ofstream csv(fs::path(dir) / "report.csv", std::ios::trunc);
  csv << render_report(result.artifacts, ReportFormat::csv);
  std::ofstream jsonOut(fs::path(dir) / "report.json", std::ios::trunc);
  jsonOut << render_report(result.artifacts, ReportFormat::json);
  return result;
}

}  // namespace parabreak::runner::demo
