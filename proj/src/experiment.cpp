#include "parabreak/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <thread>

#include "parabreak/demo.hpp"
#include "parabreak/endpoint.hpp"
#include "parabreak/prompts.hpp"
#include "parabreak/scripted_model.hpp"
#include "parabreak/version.hpp"

namespace parabreak::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string iso_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t seed_for_image(std::uint64_t plan_seed, std::size_t index) {
  return splitmix64(plan_seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

json lambda_to_json(const std::optional<double>& lambda) {
  if (!lambda) return nullptr;
  if (std::isinf(*lambda)) return "inf";
  return *lambda;
}

std::optional<double> lambda_from_json(const json& v) {
  if (v.is_null()) return std::nullopt;
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "inf" || s == "+inf" || s == "infinity") {
      return std::numeric_limits<double>::infinity();
    }
  }
  throw Error(ErrorKind::MalformedFile, "miho_lambda must be a number, \"inf\", or null");
}

std::string format_pct(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", ratio * 100.0);
  return buf;
}

// Caption file -> records in plan order; duplicate lines for an image id
// collapse to the latest one.
std::vector<corpus::CaptionRecord> records_for_eval(const std::string& path,
                                                    const std::vector<std::string>& image_ids) {
  std::map<std::string, corpus::CaptionRecord> by_id;
  for (auto& record : corpus::load_captions(path)) {
    by_id[record.image_id] = std::move(record);
  }
  std::vector<corpus::CaptionRecord> ordered;
  ordered.reserve(image_ids.size());
  for (const auto& id : image_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw Error(ErrorKind::MalformedFile, path + " has no caption for image '" + id + "'");
    }
    ordered.push_back(it->second);
  }
  return ordered;
}

}  // namespace

json ProviderSpec::to_json() const {
  json doc;
  switch (kind) {
    case Kind::demo_toy:
      doc["type"] = "demo-toy";
      break;
    case Kind::scripted:
      doc["type"] = "scripted";
      doc["path"] = path;
      break;
    case Kind::endpoint:
      doc["type"] = "endpoint";
      doc["base_url"] = base_url;
      doc["model"] = model_name;
      doc["api_key_env"] = api_key_env;
      if (!manifest_path.empty()) doc["manifest"] = manifest_path;
      doc["timeout_ms"] = timeout_ms;
      doc["max_retries"] = max_retries;
      break;
  }
  return doc;
}

ProviderSpec ProviderSpec::from_json(const json& doc) {
  ProviderSpec spec;
  const std::string type = doc.value("type", "demo-toy");
  if (type == "demo-toy") {
    spec.kind = Kind::demo_toy;
  } else if (type == "scripted") {
    spec.kind = Kind::scripted;
    spec.path = doc.at("path").get<std::string>();
  } else if (type == "endpoint") {
    spec.kind = Kind::endpoint;
    spec.base_url = doc.at("base_url").get<std::string>();
    spec.model_name = doc.value("model", "");
    spec.api_key_env = doc.value("api_key_env", "OPENAI_API_KEY");
    spec.manifest_path = doc.value("manifest", "");
    spec.timeout_ms = doc.value("timeout_ms", 30000);
    spec.max_retries = doc.value("max_retries", 3);
  } else {
    throw Error(ErrorKind::MalformedFile, "unknown provider type '" + type + "'");
  }
  return spec;
}

json ExperimentPlan::to_json() const {
  json doc;
  doc["name"] = name;
  doc["provider"] = provider.to_json();
  doc["prompt_id"] = prompt_id;
  if (!custom_prompt.empty()) doc["custom_prompt"] = custom_prompt;
  if (!prompt_prefix.empty()) doc["prompt_prefix"] = prompt_prefix;
  doc["strategy"] = std::string(decode::to_string(strategy));
  if (temperature) doc["temperature"] = *temperature;
  if (top_p) doc["top_p"] = *top_p;
  if (beam_width) doc["beam_width"] = *beam_width;
  doc["miho_lambda"] = lambda_to_json(miho_lambda);
  doc["attack_k"] = attack_k ? json(*attack_k) : json(nullptr);
  doc["max_new_tokens"] = max_new_tokens;
  doc["seed"] = seed;
  doc["image_ids"] = image_ids;
  doc["truth"] = truth_path;
  doc["lexicon"] = lexicon_path;
  doc["captions_out"] = captions_out;
  doc["artifact_out"] = artifact_out;
  if (traces_out) doc["traces_out"] = *traces_out;
  if (workers != 0) doc["workers"] = workers;
  return doc;
}

ExperimentPlan ExperimentPlan::from_json(const json& doc) {
  ExperimentPlan plan;
  try {
    plan.name = doc.at("name").get<std::string>();
    if (doc.contains("provider")) plan.provider = ProviderSpec::from_json(doc["provider"]);
    plan.prompt_id = doc.value("prompt_id", "BASE");
    plan.custom_prompt = doc.value("custom_prompt", "");
    plan.prompt_prefix = doc.value("prompt_prefix", "");
    plan.strategy = decode::strategy_from_string(doc.value("strategy", "greedy"));
    if (doc.contains("temperature") && !doc["temperature"].is_null()) {
      plan.temperature = doc["temperature"].get<double>();
    }
    if (doc.contains("top_p") && !doc["top_p"].is_null()) {
      plan.top_p = doc["top_p"].get<double>();
    }
    if (doc.contains("beam_width") && !doc["beam_width"].is_null()) {
      plan.beam_width = doc["beam_width"].get<int>();
    }
    if (doc.contains("miho_lambda")) plan.miho_lambda = lambda_from_json(doc["miho_lambda"]);
    if (doc.contains("attack_k") && !doc["attack_k"].is_null()) {
      plan.attack_k = doc["attack_k"].get<int>();
    }
    plan.max_new_tokens = doc.value("max_new_tokens", 64);
    plan.seed = doc.value("seed", std::uint64_t{0});
    plan.image_ids = doc.value("image_ids", std::vector<std::string>{});
    plan.truth_path = doc.value("truth", "");
    plan.lexicon_path = doc.value("lexicon", "");
    plan.captions_out = doc.value("captions_out", "");
    plan.artifact_out = doc.value("artifact_out", "");
    if (doc.contains("traces_out") && !doc["traces_out"].is_null()) {
      plan.traces_out = doc["traces_out"].get<std::string>();
    }
    plan.workers = doc.value("workers", 0);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("experiment plan: ") + e.what());
  }
  return plan;
}

ExperimentPlan ExperimentPlan::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MalformedFile, "cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedFile, path + ": " + e.what());
  }
  return from_json(doc);
}

void ExperimentPlan::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::MalformedFile, "cannot write " + path);
  out << to_json().dump(2) << '\n';
}

chair::ChairReport report_from_json(const json& doc) {
  chair::ChairReport report;
  try {
    report.n_captions = doc.at("n_captions").get<std::size_t>();
    report.n_captions_hallucinated = doc.at("n_captions_hallucinated").get<std::size_t>();
    report.n_mentions = doc.at("n_mentions").get<std::size_t>();
    report.n_mentions_hallucinated = doc.at("n_mentions_hallucinated").get<std::size_t>();
    report.chair_caption_rate = doc.at("chair_caption_rate").get<double>();
    report.chair_instance_rate = doc.at("chair_instance_rate").get<double>();
    report.caption_rate_defined = doc.at("caption_rate_defined").get<bool>();
    report.instance_rate_defined = doc.at("instance_rate_defined").get<bool>();
    for (const auto& entry : doc.value("per_caption", json::array())) {
      report.per_caption.emplace_back(entry.at("image_id").get<std::string>(),
                                      entry.at("hallucinated_classes").get<std::set<std::string>>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("chair report: ") + e.what());
  }
  return report;
}

json RunArtifact::to_json() const {
  json reports;
  reports["overall"] = chair::report_to_json(overall);
  reports["before_break"] = chair::report_to_json(before_break);
  reports["after_break"] = chair::report_to_json(after_break);
  if (length_matched) {
    reports["length_matched"] = {
        {"original_artifact", length_matched->original_artifact_path},
        {"truncated_original", chair::report_to_json(length_matched->truncated_original)},
        {"method", chair::report_to_json(length_matched->method)}};
  }
  return json{{"toolkit_version", toolkit_version}, {"name", plan.name},
              {"plan", plan.to_json()},            {"captions_path", captions_path},
              {"started_at", started_at},          {"finished_at", finished_at},
              {"reports", std::move(reports)}};
}

RunArtifact RunArtifact::from_json(const json& doc) {
  RunArtifact artifact;
  try {
    artifact.toolkit_version = doc.value("toolkit_version", "");
    artifact.plan = ExperimentPlan::from_json(doc.at("plan"));
    artifact.captions_path = doc.at("captions_path").get<std::string>();
    artifact.started_at = doc.value("started_at", "");
    artifact.finished_at = doc.value("finished_at", "");
    const auto& reports = doc.at("reports");
    artifact.overall = report_from_json(reports.at("overall"));
    artifact.before_break = report_from_json(reports.at("before_break"));
    artifact.after_break = report_from_json(reports.at("after_break"));
    if (reports.contains("length_matched")) {
      const auto& pair = reports["length_matched"];
      artifact.length_matched = LengthMatchedPair{
          pair.at("original_artifact").get<std::string>(),
          report_from_json(pair.at("truncated_original")), report_from_json(pair.at("method"))};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("run artifact: ") + e.what());
  }
  return artifact;
}

RunArtifact RunArtifact::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MalformedFile, "cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedFile, path + ": " + e.what());
  }
  return from_json(doc);
}

void RunArtifact::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::MalformedFile, "cannot write " + path);
  out << to_json().dump(2) << '\n';
}

namespace {

struct GenerationJob {
  std::size_t plan_index;
  std::string image_id;
};

std::string rendered_prompt(const ExperimentPlan& plan) {
  PromptTemplate tmpl = plan.prompt_id == "custom" ? custom_template(plan.custom_prompt)
                                                   : make_template(plan.prompt_id);
  return plan.prompt_prefix + render_prompt(tmpl, kBaseInstruction);
}

decode::DecodeConfig base_config(const ExperimentPlan& plan) {
  decode::DecodeConfig config;
  config.strategy = plan.strategy;
  config.max_new_tokens = plan.max_new_tokens;
  if (plan.strategy == decode::Strategy::sample) {
    config.temperature = plan.temperature.value_or(1.0);
    config.top_p = plan.top_p.value_or(1.0);
    config.seed = 0;  // replaced per image
  }
  if (plan.strategy == decode::Strategy::beam) {
    config.beam_width = plan.beam_width.value_or(4);
  }
  if (plan.miho_lambda) {
    config.transforms.push_back({*plan.miho_lambda, std::nullopt});
  }
  if (plan.attack_k) {
    decode::ParagraphBreakAttack attack;
    attack.k = *plan.attack_k;
    config.injections.push_back(attack);
  }
  return config;
}

// Resolve recorded defaults into the stored snapshot so the artifact is
// self-describing.
void record_resolved_defaults(ExperimentPlan& plan) {
  if (plan.strategy == decode::Strategy::sample) {
    plan.temperature = plan.temperature.value_or(1.0);
    plan.top_p = plan.top_p.value_or(1.0);
  }
  if (plan.strategy == decode::Strategy::beam) {
    plan.beam_width = plan.beam_width.value_or(4);
  }
}

}  // namespace

RunArtifact run_experiment(const ExperimentPlan& plan) {
  if (plan.name.empty()) throw Error(ErrorKind::InvalidConfig, "plan needs a name");
  if (plan.image_ids.empty()) throw Error(ErrorKind::InvalidConfig, "plan has no image ids");
  if (plan.captions_out.empty() || plan.artifact_out.empty()) {
    throw Error(ErrorKind::InvalidConfig, "plan needs captions_out and artifact_out paths");
  }
  if (plan.lexicon_path.empty() || plan.truth_path.empty()) {
    throw Error(ErrorKind::InvalidConfig, "plan needs truth and lexicon paths");
  }
  {
    std::set<std::string> unique(plan.image_ids.begin(), plan.image_ids.end());
    if (unique.size() != plan.image_ids.size()) {
      throw Error(ErrorKind::InvalidConfig, "plan image ids must be unique");
    }
  }

  const auto lexicon = corpus::load_lexicon(plan.lexicon_path);
  const auto truth = corpus::load_ground_truth(plan.truth_path, lexicon);

  RunArtifact artifact;
  artifact.plan = plan;
  record_resolved_defaults(artifact.plan);
  artifact.captions_path = plan.captions_out;
  artifact.toolkit_version = kToolkitVersion;
  artifact.started_at = iso_now();

  // Resume: any image id already persisted is kept as-is.
  std::set<std::string> already_done;
  if (fs::exists(plan.captions_out)) {
    for (const auto& record : corpus::load_captions(plan.captions_out)) {
      already_done.insert(record.image_id);
    }
  }
  std::vector<GenerationJob> jobs;
  for (std::size_t i = 0; i < plan.image_ids.size(); ++i) {
    if (!already_done.contains(plan.image_ids[i])) {
      jobs.push_back({i, plan.image_ids[i]});
    }
  }

  const std::string prompt = rendered_prompt(plan);
  const decode::DecodeConfig base = base_config(artifact.plan);

  // Provider setup. Local scripted models are lookup tables, safe to share
  // across the pool; the endpoint adapter bounds its own in-flight requests.
  std::shared_ptr<providers::ScriptedModel> model;
  std::shared_ptr<providers::EndpointAdapter> adapter;
  switch (plan.provider.kind) {
    case ProviderSpec::Kind::demo_toy:
      model = std::make_shared<providers::ScriptedModel>(demo::build_demo_model());
      break;
    case ProviderSpec::Kind::scripted:
      model = std::make_shared<providers::ScriptedModel>(
          providers::ScriptedModel::load(plan.provider.path));
      break;
    case ProviderSpec::Kind::endpoint: {
      providers::EndpointConfig config;
      config.base_url = plan.provider.base_url;
      config.model_name = plan.provider.model_name;
      config.api_key_env = plan.provider.api_key_env;
      config.timeout_ms = plan.provider.timeout_ms;
      config.max_retries = plan.provider.max_retries;
      if (!plan.provider.manifest_path.empty()) {
        config.manifest = providers::load_token_manifest(plan.provider.manifest_path);
      }
      adapter = std::make_shared<providers::EndpointAdapter>(std::move(config));
      break;
    }
  }

  auto generate_one = [&](const GenerationJob& job) {
    decode::DecodeConfig config = base;
    if (config.strategy == decode::Strategy::sample) {
      config.seed = seed_for_image(plan.seed, job.plan_index);
    }
    decode::DecodeTrace trace = model ? decode::generate(*model, prompt, config)
                                      : providers::remote_generate(*adapter, prompt, config);
    corpus::CaptionRecord record;
    record.image_id = job.image_id;
    record.text = trace.text;
    record.prompt_id = plan.prompt_id;
    record.run_id = plan.name;
    if (!trace.token_ids.empty()) record.token_ids = trace.token_ids;
    return std::make_pair(std::move(record), std::move(trace));
  };

  if (auto dir = fs::path(plan.captions_out).parent_path(); !dir.empty()) {
    fs::create_directories(dir);
  }
  std::ofstream captions_stream(plan.captions_out, std::ios::binary | std::ios::app);
  if (!captions_stream) {
    throw Error(ErrorKind::MalformedFile, "cannot write " + plan.captions_out);
  }
  std::optional<std::ofstream> traces_stream;
  if (plan.traces_out) {
    if (auto dir = fs::path(*plan.traces_out).parent_path(); !dir.empty()) {
      fs::create_directories(dir);
    }
    traces_stream.emplace(*plan.traces_out, std::ios::binary | std::ios::app);
  }

  std::vector<std::optional<corpus::CaptionRecord>> fresh(jobs.size());
  std::vector<std::string> trace_lines(jobs.size());
  std::exception_ptr failure;
  {
    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> failed{false};
    std::mutex flush_mutex;
    std::size_t flush_cursor = 0;
    // The resumable cursor is the caption file itself: completed records
    // flush as a contiguous plan-order prefix while the run progresses.
    auto flush_ready = [&] {
      while (flush_cursor < jobs.size() && fresh[flush_cursor]) {
        captions_stream << corpus::caption_to_json_line(*fresh[flush_cursor]) << '\n';
        if (traces_stream) *traces_stream << trace_lines[flush_cursor] << '\n';
        ++flush_cursor;
      }
      captions_stream.flush();
      if (traces_stream) traces_stream->flush();
    };

    unsigned pool_size = plan.workers > 0
                             ? static_cast<unsigned>(plan.workers)
                             : std::min(4u, std::max(1u, std::thread::hardware_concurrency()));
    pool_size = std::min<unsigned>(pool_size, std::max<std::size_t>(jobs.size(), 1));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < pool_size; ++w) {
      pool.emplace_back([&] {
        while (!failed.load()) {
          std::size_t i = cursor.fetch_add(1);
          if (i >= jobs.size()) break;
          try {
            auto [record, trace] = generate_one(jobs[i]);
            decode::TraceMeta meta{plan.name,     jobs[i].image_id, plan.prompt_id,
                                   plan.strategy, plan.miho_lambda, plan.attack_k};
            std::lock_guard lock(flush_mutex);
            trace_lines[i] = decode::trace_to_json_line(trace, meta);
            fresh[i] = std::move(record);
            flush_ready();
          } catch (...) {
            std::lock_guard lock(flush_mutex);
            if (!failure) failure = std::current_exception();
            failed.store(true);
            break;
          }
        }
      });
    }
    for (auto& thread : pool) thread.join();

    // A failure can strand completed records past the failing index; keep
    // them too, so the rerun only regenerates what is actually missing.
    for (std::size_t i = flush_cursor; i < jobs.size(); ++i) {
      if (!fresh[i]) continue;
      captions_stream << corpus::caption_to_json_line(*fresh[i]) << '\n';
      if (traces_stream) *traces_stream << trace_lines[i] << '\n';
    }
    captions_stream.flush();
    if (traces_stream) traces_stream->flush();
  }
  if (failure) std::rethrow_exception(failure);

  // Reports always derive from the stored bytes, so re-evaluation of the
  // caption file reproduces them exactly.
  const auto records = records_for_eval(plan.captions_out, plan.image_ids);
  artifact.overall = chair::compute_chair(records, lexicon, truth);
  std::tie(artifact.before_break, artifact.after_break) =
      chair::segment_chair(records, lexicon, truth);
  artifact.finished_at = iso_now();

  if (auto dir = fs::path(plan.artifact_out).parent_path(); !dir.empty()) {
    fs::create_directories(dir);
  }
  artifact.save(plan.artifact_out);
  return artifact;
}

std::pair<chair::ChairReport, chair::ChairReport> compare_equal_length(
    const RunArtifact& original, const RunArtifact& method) {
  std::set<std::string> original_ids(original.plan.image_ids.begin(),
                                     original.plan.image_ids.end());
  std::set<std::string> method_ids(method.plan.image_ids.begin(), method.plan.image_ids.end());
  if (original_ids != method_ids) {
    throw Error(ErrorKind::MismatchedImageSets,
                "original and method runs cover different image sets");
  }

  const auto lexicon = corpus::load_lexicon(original.plan.lexicon_path);
  const auto truth = corpus::load_ground_truth(original.plan.truth_path, lexicon);
  const auto original_records =
      records_for_eval(original.captions_path, original.plan.image_ids);
  const auto method_records = records_for_eval(method.captions_path, original.plan.image_ids);

  std::vector<corpus::CaptionRecord> truncated;
  truncated.reserve(original_records.size());
  for (std::size_t i = 0; i < original_records.size(); ++i) {
    truncated.push_back(
        chair::truncate_to_match(original_records[i], chair::word_count(method_records[i].text)));
  }
  return {chair::compute_chair(truncated, lexicon, truth),
          chair::compute_chair(method_records, lexicon, truth)};
}

void attach_equal_length(RunArtifact& method, const RunArtifact& original) {
  auto [truncated, method_report] = compare_equal_length(original, method);
  method.length_matched =
      LengthMatchedPair{original.plan.artifact_out, std::move(truncated), std::move(method_report)};
  method.save(method.plan.artifact_out);
}

bool verify_artifact(const RunArtifact& artifact) {
  const auto lexicon = corpus::load_lexicon(artifact.plan.lexicon_path);
  const auto truth = corpus::load_ground_truth(artifact.plan.truth_path, lexicon);
  const auto records = records_for_eval(artifact.captions_path, artifact.plan.image_ids);
  const auto overall = chair::compute_chair(records, lexicon, truth);
  const auto [before, after] = chair::segment_chair(records, lexicon, truth);
  bool ok = chair::report_to_json(overall) == chair::report_to_json(artifact.overall) &&
            chair::report_to_json(before) == chair::report_to_json(artifact.before_break) &&
            chair::report_to_json(after) == chair::report_to_json(artifact.after_break);
  if (ok && artifact.length_matched) {
    const auto original = RunArtifact::load(artifact.length_matched->original_artifact_path);
    const auto [truncated, method_report] = compare_equal_length(original, artifact);
    ok = chair::report_to_json(truncated) ==
             chair::report_to_json(artifact.length_matched->truncated_original) &&
         chair::report_to_json(method_report) ==
             chair::report_to_json(artifact.length_matched->method);
  }
  return ok;
}

ReportFormat report_format_from_string(std::string_view name) {
  if (name == "text") return ReportFormat::text;
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  throw Error(ErrorKind::InvalidConfig, "unknown report format '" + std::string(name) + "'");
}

namespace {

std::string rate_cell(double ratio, bool defined) {
  return defined ? format_pct(ratio) : "—";
}

std::string render_text(const std::vector<RunArtifact>& artifacts) {
  std::vector<decode::Strategy> strategies;
  for (auto strategy : {decode::Strategy::greedy, decode::Strategy::sample, decode::Strategy::beam}) {
    for (const auto& artifact : artifacts) {
      if (artifact.plan.strategy == strategy) {
        strategies.push_back(strategy);
        break;
      }
    }
  }

  std::vector<std::string> names;
  for (const auto& artifact : artifacts) {
    if (std::find(names.begin(), names.end(), artifact.plan.name) == names.end()) {
      names.push_back(artifact.plan.name);
    }
  }

  std::string out = "method";
  for (auto strategy : strategies) {
    out += ' ';
    out += decode::to_string(strategy);
    out += ":caption% ";
    out += decode::to_string(strategy);
    out += ":instance%";
  }
  out += '\n';

  for (const auto& name : names) {
    out += name;
    for (auto strategy : strategies) {
      const RunArtifact* found = nullptr;
      for (const auto& artifact : artifacts) {
        if (artifact.plan.name == name && artifact.plan.strategy == strategy) {
          found = &artifact;
          break;
        }
      }
      if (found) {
        out += ' ' + rate_cell(found->overall.chair_caption_rate,
                               found->overall.caption_rate_defined);
        out += ' ' + rate_cell(found->overall.chair_instance_rate,
                               found->overall.instance_rate_defined);
      } else {
        out += " — —";
      }
    }
    out += '\n';
  }
  return out;
}

std::string render_csv(const std::vector<RunArtifact>& artifacts) {
  std::string out = "method,strategy,group,n_captions,caption_rate_pct,instance_rate_pct\n";
  auto row = [&](const RunArtifact& artifact, const std::string& group,
                 const chair::ChairReport& report) {
    out += artifact.plan.name;
    out += ',';
    out += decode::to_string(artifact.plan.strategy);
    out += ',';
    out += group;
    out += ',';
    out += std::to_string(report.n_captions);
    out += ',';
    out += format_pct(report.chair_caption_rate);
    out += ',';
    out += format_pct(report.chair_instance_rate);
    out += '\n';
  };
  for (const auto& artifact : artifacts) {
    row(artifact, "overall", artifact.overall);
    row(artifact, "before_break", artifact.before_break);
    row(artifact, "after_break", artifact.after_break);
    if (artifact.length_matched) {
      row(artifact, "equal_length_original", artifact.length_matched->truncated_original);
      row(artifact, "equal_length_method", artifact.length_matched->method);
    }
  }
  return out;
}

std::string render_json(const std::vector<RunArtifact>& artifacts) {
  json rows = json::array();
  for (const auto& artifact : artifacts) {
    json reports;
    reports["overall"] = chair::report_to_json(artifact.overall);
    reports["before_break"] = chair::report_to_json(artifact.before_break);
    reports["after_break"] = chair::report_to_json(artifact.after_break);
    if (artifact.length_matched) {
      reports["length_matched"] = {
          {"original_artifact", artifact.length_matched->original_artifact_path},
          {"truncated_original", chair::report_to_json(artifact.length_matched->truncated_original)},
          {"method", chair::report_to_json(artifact.length_matched->method)}};
    }
    rows.push_back({{"name", artifact.plan.name},
                    {"strategy", std::string(decode::to_string(artifact.plan.strategy))},
                    {"reports", std::move(reports)}});
  }
  return rows.dump(2) + "\n";
}

}  // namespace

std::string render_report(const std::vector<RunArtifact>& artifacts, ReportFormat format) {
  if (artifacts.empty()) throw Error(ErrorKind::InvalidConfig, "no artifacts to render");
  switch (format) {
    case ReportFormat::text: return render_text(artifacts);
    case ReportFormat::csv: return render_csv(artifacts);
    case ReportFormat::json: return render_json(artifacts);
  }
  throw Error(ErrorKind::InvalidConfig, "unhandled report format");
}

}  // namespace parabreak::runner
