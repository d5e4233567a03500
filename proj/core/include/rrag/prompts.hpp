#pragma once

// Prompt rendering. Template text lives in assets/prompts/*.txt and is compiled
// into the library; placeholders are written `{name}`.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rrag/tokens.hpp"

namespace rrag {

/// An (instruction, input, output) example.
struct Triplet {
  std::string instruction;
  std::string input;
  std::string output;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Replaces every `{name}` whose name is a key of `vars` in a single left to
/// right pass; substituted text is never rescanned and unknown placeholders
/// are left untouched.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

/// Identifier of the generator template compiled into this build.
inline constexpr std::string_view k_generator_template_version = "generator_v1";

/// One "### Instruction / ### Input / ### Output" block; the input section is
/// omitted when `input` is empty.
std::string render_generator_block(std::string_view instruction, std::string_view input,
                                   std::string_view output);

/// Few-shot blocks followed by the query block, separated by blank lines. The
/// prompt ends with "### Output:\n" so generation continues the output slot.
std::string render_generator_prompt(std::string_view instruction, std::string_view input,
                                    const std::vector<Triplet>& fewshot);

/// Critic prompt for one reflective-token type. The instruction is followed by
/// "\n" + input when the input is non-empty.
std::string render_critic_prompt(TokenKind kind, std::string_view instruction, std::string_view input,
                                 std::string_view output, std::string_view evidence,
                                 std::string_view preceding = {});

/// The raw critic template for `kind`.
std::string_view critic_template(TokenKind kind) noexcept;

}  // namespace rrag
