#pragma once

/**
 * Prompt templates for input-side mitigation. The base instruction asks for
 * a detailed description; P1-P5 append a clause that discourages paragraph
 * breaks. Custom templates substitute the instruction into "{instruction}"
 * when present.
 */

#include <string>
#include <string_view>

#include "parabreak/error.hpp"

namespace parabreak::runner {

inline constexpr std::string_view kBaseInstruction = "Please describe this image in detail.";

struct PromptTemplate {
  std::string id;    // BASE, P1..P5, or custom
  std::string text;  // rendered form for known ids; raw template for custom
};

// BASE and P1..P5; anything else raises UnknownTemplate.
PromptTemplate make_template(const std::string& id);

PromptTemplate custom_template(std::string text);

// Deterministic, pure. BASE returns base_instruction unchanged; P1..P5
// insert their clause before the instruction's final period.
std::string render_prompt(const PromptTemplate& tmpl, std::string_view base_instruction);

}  // namespace parabreak::runner
