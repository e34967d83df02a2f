#include "parabreak/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace parabreak::corpus {

using nlohmann::json;

namespace {

std::size_t count_words(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    if (c == ' ') {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::MalformedFile, "cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// COCO ids come as integers in the wild; we accept both and canonicalize to
// an opaque string.
std::string id_to_string(const json& v, const char* what) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  throw Error(ErrorKind::MalformedFile, std::string(what) + " must be a string or integer");
}

void insert_mapping(ObjectLexicon& lex, const std::string& surface, const std::string& cls) {
  auto [it, inserted] = lex.surface_map.emplace(surface, cls);
  if (!inserted && it->second != cls) {
    throw Error(ErrorKind::DuplicateSurfaceForm,
                "'" + surface + "' maps to both '" + it->second + "' and '" + cls + "'");
  }
}

void finalize_lexicon(ObjectLexicon& lex) {
  for (const auto& cls : lex.classes) {
    insert_mapping(lex, cls, cls);
  }
  lex.max_surface_words = 1;
  for (const auto& [surface, cls] : lex.surface_map) {
    lex.max_surface_words = std::max(lex.max_surface_words, count_words(surface));
  }
}

}  // namespace

bool ObjectLexicon::has_class(std::string_view name) const {
  return std::find(classes.begin(), classes.end(), name) != classes.end();
}

std::string normalize_surface(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

ObjectLexicon lexicon_from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
  ObjectLexicon lex;
  for (const auto& [raw_surface, raw_cls] : pairs) {
    std::string surface = normalize_surface(raw_surface);
    std::string cls = normalize_surface(raw_cls);
    if (surface.empty() || cls.empty()) {
      throw Error(ErrorKind::MalformedFile, "empty surface form or class name");
    }
    if (!lex.has_class(cls)) lex.classes.push_back(cls);
    insert_mapping(lex, surface, cls);
  }
  finalize_lexicon(lex);
  return lex;
}

ObjectLexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::MalformedFile, "cannot open " + path.string());
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view sv(line);
    // Skip blank and comment lines.
    std::size_t first = sv.find_first_not_of(" \t");
    if (first == std::string_view::npos || sv[first] == '#') continue;
    std::size_t tab = sv.find('\t');
    if (tab == std::string_view::npos) {
      throw Error(ErrorKind::MalformedFile,
                  path.string() + ":" + std::to_string(line_no) + ": expected surface<TAB>class");
    }
    pairs.emplace_back(std::string(sv.substr(0, tab)), std::string(sv.substr(tab + 1)));
  }
  return lexicon_from_pairs(pairs);
}

GroundTruth load_ground_truth(const std::filesystem::path& path, const ObjectLexicon& lexicon) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedFile, path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("images") || !doc.contains("annotations") ||
      !doc.contains("categories")) {
    throw Error(ErrorKind::MalformedFile,
                path.string() + ": expected top-level images/annotations/categories arrays");
  }

  // categories: id -> canonical class, resolved through the lexicon.
  std::map<std::string, std::string> category_class;
  std::vector<std::string> unknown;
  for (const auto& cat : doc["categories"]) {
    if (!cat.contains("id") || !cat.contains("name")) {
      throw Error(ErrorKind::MalformedFile, "category entry missing id/name");
    }
    std::string name = normalize_surface(cat["name"].get<std::string>());
    auto it = lexicon.surface_map.find(name);
    if (it == lexicon.surface_map.end()) {
      unknown.push_back(name);
      continue;
    }
    category_class[id_to_string(cat["id"], "category id")] = it->second;
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
    std::string msg = "categories not in lexicon:";
    for (const auto& u : unknown) msg += " '" + u + "'";
    throw Error(ErrorKind::UnknownCategory, msg);
  }

  GroundTruth truth;
  for (const auto& img : doc["images"]) {
    if (!img.contains("id")) {
      throw Error(ErrorKind::MalformedFile, "image entry missing id");
    }
    truth.entries[id_to_string(img["id"], "image id")];
  }
  for (const auto& ann : doc["annotations"]) {
    if (!ann.contains("image_id") || !ann.contains("category_id")) {
      throw Error(ErrorKind::MalformedFile, "annotation entry missing image_id/category_id");
    }
    std::string cat_id = id_to_string(ann["category_id"], "category id");
    auto it = category_class.find(cat_id);
    if (it == category_class.end()) {
      throw Error(ErrorKind::MalformedFile, "annotation references unknown category id " + cat_id);
    }
    truth.entries[id_to_string(ann["image_id"], "image id")].insert(it->second);
  }
  if (truth.entries.empty()) {
    throw Error(ErrorKind::EmptyGroundTruth, path.string() + " contains zero images");
  }
  return truth;
}

CaptionRecord caption_from_json_line(const std::string& line, std::size_t line_no) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!obj.is_object()) {
    throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": not a JSON object");
  }
  for (const char* key : {"image_id", "caption"}) {
    if (!obj.contains(key)) {
      throw Error(ErrorKind::MissingField,
                  "line " + std::to_string(line_no) + ": missing '" + key + "'");
    }
  }
  CaptionRecord rec;
  try {
    rec.image_id = id_to_string(obj["image_id"], "image_id");
    rec.text = obj["caption"].get<std::string>();
    if (obj.contains("prompt_id") && !obj["prompt_id"].is_null()) {
      rec.prompt_id = obj["prompt_id"].get<std::string>();
    }
    if (obj.contains("run_id") && !obj["run_id"].is_null()) {
      rec.run_id = obj["run_id"].get<std::string>();
    }
    if (obj.contains("token_ids") && !obj["token_ids"].is_null()) {
      rec.token_ids = obj["token_ids"].get<std::vector<int>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": " + e.what());
  }
  return rec;
}

std::string caption_to_json_line(const CaptionRecord& record) {
  json obj;
  obj["image_id"] = record.image_id;
  obj["caption"] = record.text;
  if (record.prompt_id) obj["prompt_id"] = *record.prompt_id;
  if (!record.run_id.empty()) obj["run_id"] = record.run_id;
  if (record.token_ids) obj["token_ids"] = *record.token_ids;
  return obj.dump();
}

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::MalformedFile, "cannot open " + path.string());
  }
  std::vector<CaptionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    records.push_back(caption_from_json_line(line, line_no));
  }
  return records;
}

void save_captions(const std::filesystem::path& path, const std::vector<CaptionRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::MalformedFile, "cannot write " + path.string());
  }
  for (const auto& rec : records) {
    out << caption_to_json_line(rec) << '\n';
  }
}

}  // namespace parabreak::corpus
