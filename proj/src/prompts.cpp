#include "parabreak/prompts.hpp"

#include <array>

namespace parabreak::runner {

namespace {

struct Clause {
  std::string_view id;
  std::string_view suffix;  // inserted before the final period
};

// P4 carries the literal two-character sequence backslash-n, as written.
constexpr std::array<Clause, 5> kClauses = {{
    {"P1", " in one paragraph"},
    {"P2", " in a single, continuous text"},
    {"P3", ", with no separation into paragraphs"},
    {"P4", " without \\n"},
    {"P5", " without using paragraph breaks"},
}};

const Clause* find_clause(std::string_view id) {
  for (const auto& clause : kClauses) {
    if (clause.id == id) return &clause;
  }
  return nullptr;
}

std::string apply_clause(std::string_view base, std::string_view suffix) {
  std::string body(base);
  while (!body.empty() && (body.back() == ' ' || body.back() == '\t')) body.pop_back();
  bool had_period = false;
  if (!body.empty() && body.back() == '.') {
    body.pop_back();
    had_period = true;
  }
  body += suffix;
  if (had_period) body += '.';
  return body;
}

}  // namespace

PromptTemplate make_template(const std::string& id) {
  if (id == "BASE") return {"BASE", std::string(kBaseInstruction)};
  if (const Clause* clause = find_clause(id)) {
    return {id, apply_clause(kBaseInstruction, clause->suffix)};
  }
  throw Error(ErrorKind::UnknownTemplate, "no prompt template '" + id + "'");
}

PromptTemplate custom_template(std::string text) {
  return {"custom", std::move(text)};
}

std::string render_prompt(const PromptTemplate& tmpl, std::string_view base_instruction) {
  if (tmpl.id == "BASE") return std::string(base_instruction);
  if (const Clause* clause = find_clause(tmpl.id)) {
    return apply_clause(base_instruction, clause->suffix);
  }
  if (tmpl.id == "custom") {
    std::string out = tmpl.text;
    const std::string placeholder = "{instruction}";
    if (auto pos = out.find(placeholder); pos != std::string::npos) {
      out.replace(pos, placeholder.size(), base_instruction);
    }
    return out;
  }
  throw Error(ErrorKind::UnknownTemplate, "no prompt template '" + tmpl.id + "'");
}

}  // namespace parabreak::runner
