#include "rrag/prompts.hpp"

#include "prompt_assets.hpp"

namespace rrag {

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = tmpl.find('}', open + 1);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + 1, close - open - 1));
    if (auto it = vars.find(name); it != vars.end()) {
      out.append(it->second);
      pos = close + 1;
    } else {
      out.push_back('{');
      pos = open + 1;
    }
  }
  out.append(tmpl.substr(pos));
  return out;
}

std::string render_generator_block(std::string_view instruction, std::string_view input,
                                   std::string_view output) {
  std::string input_section;
  if (!input.empty()) input_section = "### Input:\n" + std::string(input) + "\n\n";
  return render_template(assets::k_generator_v1, {{"instruction", std::string(instruction)},
                                                  {"input_section", input_section},
                                                  {"output", std::string(output)}});
}

std::string render_generator_prompt(std::string_view instruction, std::string_view input,
                                    const std::vector<Triplet>& fewshot) {
  std::string prompt;
  for (const auto& shot : fewshot) {
    prompt += render_generator_block(shot.instruction, shot.input, shot.output);
    prompt += "\n\n";
  }
  prompt += render_generator_block(instruction, input, "");
  return prompt;
}

std::string_view critic_template(TokenKind kind) noexcept {
  switch (kind) {
    case TokenKind::Ret: return assets::k_critic_retrieval;
    case TokenKind::Rel: return assets::k_critic_relevance;
    case TokenKind::Sup: return assets::k_critic_support;
    case TokenKind::Use: return assets::k_critic_utility;
  }
  return {};
}

std::string render_critic_prompt(TokenKind kind, std::string_view instruction, std::string_view input,
                                 std::string_view output, std::string_view evidence,
                                 std::string_view preceding) {
  std::string full_instruction(instruction);
  if (!input.empty()) {
    full_instruction += '\n';
    full_instruction += input;
  }
  return render_template(critic_template(kind),
                         {{"Example Instruction", full_instruction},
                          {"Example Output", std::string(output)},
                          {"Example Evidence", std::string(evidence)},
                          {"Example Preceding sentences", std::string(preceding)}});
}

}  // namespace rrag
