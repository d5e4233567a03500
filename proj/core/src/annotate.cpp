#include "rrag/annotate.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "rrag/error.hpp"
#include "rrag/jsonl.hpp"
#include "rrag/parallel.hpp"
#include "rrag/prompts.hpp"
#include "text_util.hpp"

namespace rrag {
namespace {

/// Uniform integer in [0, bound) from a 64-bit engine, by rejection.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (std::numeric_limits<std::uint64_t>::max() - bound + 1) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

nlohmann::ordered_json token_or_null(const std::optional<ReflectiveToken>& t) {
  return t ? nlohmann::ordered_json(surface_form(*t)) : nlohmann::ordered_json(nullptr);
}

std::optional<ReflectiveToken> token_field(const nlohmann::json& j, const char* key, TokenKind kind) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  auto token = it->is_string() ? parse_surface_form(it->get<std::string>()) : std::nullopt;
  if (!token || token->kind() != kind) {
    throw Error(ErrorCode::MalformedRecord, std::string("annotation '") + key + "' is not a " +
                                                std::string(kind_name(kind)) + " token");
  }
  return token;
}

std::vector<ReflectiveToken> expected_tokens(const Annotations& a) {
  std::vector<ReflectiveToken> out;
  for (const auto* t : {&a.ret, &a.rel, &a.sup, &a.use}) {
    if (*t) out.push_back(**t);
  }
  return out;
}

class Annotator {
 public:
  Annotator(const InstructionInstance& inst, const ModelBackend& critic, const EvidenceSource* evidence,
            const AnnotateConfig& cfg)
      : inst_(inst), critic_(critic), evidence_(evidence), cfg_(cfg) {}

  AnnotatedInstance run() {
    AnnotatedInstance out;
    out.base = inst_;
    Annotations& a = out.annotations;

    a.ret = ask(TokenKind::Ret, "", out);
    if (a.ret && a.ret->is(RetValue::Retrieval)) {
      std::vector<Evidence> found;
      if (evidence_ != nullptr) {
        std::string query = inst_.instruction;
        if (!inst_.input.empty()) query += " " + inst_.input;
        found = evidence_->retrieve(query);
      }
      if (found.empty()) {
        out.flags.push_back({std::string(k_flag_missing_evidence),
                             "critic asked for retrieval but no evidence was found"});
      } else {
        out.evidence = found.front();
        a.rel = ask(TokenKind::Rel, out.evidence->chunk.text, out);
        a.sup = ask(TokenKind::Sup, out.evidence->chunk.text, out);
      }
    }
    a.use = ask(TokenKind::Use, "", out);

    SegmentStream items;
    if (a.ret) items.emplace_back(*a.ret);
    if (out.evidence) items.emplace_back(Paragraph{out.evidence->chunk.text});
    if (a.rel) items.emplace_back(*a.rel);
    items.emplace_back(Text{std::string(detail::trim(inst_.output))});
    if (a.sup) items.emplace_back(*a.sup);
    if (a.use) items.emplace_back(*a.use);
    // Reparse the wire text so the stored stream is exactly what an exporter
    // writes and a trainer reads back.
    try {
      out.stream = parse_stream(serialize_stream(items)).stream;
    } catch (const Error& e) {
      out.stream = std::move(items);
      out.flags.push_back({"unparseable-stream", e.what()});
    }
    return out;
  }

 private:
  std::optional<ReflectiveToken> ask(TokenKind kind, std::string_view evidence, AnnotatedInstance& out) {
    GenerationRequest req;
    req.prompt = render_critic_prompt(kind, inst_.instruction, inst_.input, inst_.output, evidence);
    req.max_tokens = cfg_.max_tokens;
    // Critic replies are judged on their text alone, so control distributions
    // are neither requested nor validated here.
    const GenerationResponse resp = critic_.generate(req);
    auto verdict = read_critic_verdict(resp.text, kind);
    if (!verdict) {
      std::string reply(detail::trim(resp.text).substr(0, 80));
      out.flags.push_back({std::string(k_flag_malformed_critic_output),
                           std::string(kind_name(kind)) + " reply has no usable token: '" + reply + "'"});
    }
    return verdict;
  }

  const InstructionInstance& inst_;
  const ModelBackend& critic_;
  const EvidenceSource* evidence_;
  const AnnotateConfig& cfg_;
};

}  // namespace

InstructionInstance instance_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, "instance is not an object");
  InstructionInstance inst;
  inst.id = require_string(j, "id");
  inst.source = optional_string(j, "source");
  inst.instruction = require_string(j, "instruction");
  inst.input = optional_string(j, "input");
  inst.output = require_string(j, "output");
  if (detail::trim(inst.instruction).empty() || detail::trim(inst.output).empty()) {
    throw Error(ErrorCode::MissingField, "instance '" + inst.id + "' needs a non-empty instruction and output");
  }
  return inst;
}

nlohmann::ordered_json instance_to_json(const InstructionInstance& inst) {
  return {{"id", inst.id},
          {"source", inst.source},
          {"instruction", inst.instruction},
          {"input", inst.input},
          {"output", inst.output}};
}

std::vector<InstructionInstance> read_instances_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<InstructionInstance> out;
  for_each_line(in, [&](std::size_t line, std::string_view text) {
    try {
      out.push_back(instance_from_json(parse_json_record(text, line)));
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(line) + ": " + e.message());
    }
  });
  return out;
}

std::vector<InstructionInstance> sample_for_critic(const std::vector<InstructionInstance>& instances,
                                                   std::size_t n, std::uint64_t seed) {
  if (n > instances.size()) {
    throw Error(ErrorCode::NotEnoughInstances, "cannot sample " + std::to_string(n) + " of " +
                                                   std::to_string(instances.size()) + " instances");
  }
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::vector<InstructionInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, order.size() - i));
    std::swap(order[i], order[j]);
    out.push_back(instances[order[i]]);
  }
  return out;
}

std::optional<ReflectiveToken> read_critic_verdict(std::string_view reply, TokenKind kind) {
  try {
    const auto parsed = parse_stream(reply);
    if (auto token = first_token(parsed.stream, kind)) return token;
  } catch (const Error&) {
    return std::nullopt;
  }
  if (kind == TokenKind::Use) {
    const std::string_view body = detail::trim(reply);
    if (!body.empty() && body[0] >= '1' && body[0] <= '5' &&
        (body.size() == 1 || !(body[1] >= '0' && body[1] <= '9'))) {
      return ReflectiveToken::utility(body[0] - '0');
    }
  }
  return std::nullopt;
}

AnnotatedInstance annotate_instance(const InstructionInstance& inst, const ModelBackend& critic,
                                    const EvidenceSource* evidence, const AnnotateConfig& cfg) {
  if (critic.role() != BackendRole::Critic) {
    throw Error(ErrorCode::InvalidArgument, "annotation needs a Critic-role backend");
  }
  return Annotator(inst, critic, evidence, cfg).run();
}

std::vector<AnnotatedInstance> annotate_batch(const std::vector<InstructionInstance>& instances,
                                              const ModelBackend& critic, const EvidenceSource* evidence,
                                              const AnnotateConfig& cfg, std::size_t workers) {
  return parallel_map(instances.size(), workers, [&](std::size_t i) {
    return annotate_instance(instances[i], critic, evidence, cfg);
  });
}

std::optional<std::string> invariant_violation(const AnnotatedInstance& inst) {
  const Annotations& a = inst.annotations;
  if (!a.ret) return "missing RET annotation";
  if (!a.use) return "missing USE annotation";
  ParseResult reparsed;
  try {
    reparsed = parse_stream(serialize_stream(inst.stream));
  } catch (const Error& e) {
    return std::string("stream does not reparse: ") + e.what();
  }
  if (!reparsed.diagnostics.empty()) return "stream carries unknown bracketed tokens";
  if (reparsed.stream != inst.stream) return "stream is not canonical";
  if (tokens_in(inst.stream) != expected_tokens(a)) return "stream tokens disagree with annotations";

  const auto& s = inst.stream;
  if (s.empty() || !std::holds_alternative<ReflectiveToken>(s.front()) ||
      std::get<ReflectiveToken>(s.front()) != *a.ret) {
    return "stream does not open with the RET annotation";
  }
  if (!std::holds_alternative<ReflectiveToken>(s.back()) || std::get<ReflectiveToken>(s.back()) != *a.use) {
    return "stream does not close with the USE annotation";
  }
  const auto paragraphs = std::count_if(s.begin(), s.end(),
                                        [](const Segment& x) { return std::holds_alternative<Paragraph>(x); });
  const auto first_text = std::find_if(s.begin(), s.end(),
                                       [](const Segment& x) { return std::holds_alternative<Text>(x); });
  if (first_text == s.end()) return "stream has no output text";
  if (a.ret->is(RetValue::Retrieval)) {
    if (!a.rel || !a.sup) return "retrieval instance lacks REL or SUP";
    if (paragraphs != 1 || !std::holds_alternative<Paragraph>(s[1])) {
      return "retrieval instance needs exactly one paragraph right after [Retrieval]";
    }
  } else {
    if (paragraphs != 0) return "paragraph present without [Retrieval]";
    if (a.rel || a.sup) return "REL or SUP present without [Retrieval]";
  }
  return std::nullopt;
}

std::optional<std::string_view> drop_reason(const AnnotatedInstance& inst) {
  for (const auto& f : inst.flags) {
    if (f.code == k_flag_malformed_critic_output) return k_drop_malformed;
  }
  if (!inst.stream.empty()) {
    const auto* t = std::get_if<ReflectiveToken>(&inst.stream.front());
    if (t != nullptr && t->is(RetValue::Continue)) return k_drop_continue_at_start;
  }
  if (!inst.flags.empty() || invariant_violation(inst)) return k_drop_invariant;
  return std::nullopt;
}

nlohmann::ordered_json filter_report_to_json(const FilterReport& report) {
  nlohmann::ordered_json reasons = nlohmann::ordered_json::object();
  for (const auto& [reason, count] : report.reasons) reasons[reason] = count;
  return {{"kept", report.kept}, {"dropped", report.dropped}, {"reasons", std::move(reasons)}};
}

std::pair<std::vector<AnnotatedInstance>, FilterReport> filter_annotated(
    std::vector<AnnotatedInstance> instances) {
  FilterReport report;
  std::vector<AnnotatedInstance> kept;
  for (auto& inst : instances) {
    if (auto reason = drop_reason(inst)) {
      ++report.dropped;
      ++report.reasons[std::string(*reason)];
    } else {
      ++report.kept;
      kept.push_back(std::move(inst));
    }
  }
  return {std::move(kept), std::move(report)};
}

nlohmann::ordered_json annotated_to_json(const AnnotatedInstance& inst) {
  nlohmann::ordered_json j = instance_to_json(inst.base);
  j["text"] = serialize_stream(inst.stream);
  j["annotations"] = {{"ret", token_or_null(inst.annotations.ret)},
                      {"rel", token_or_null(inst.annotations.rel)},
                      {"sup", token_or_null(inst.annotations.sup)},
                      {"use", token_or_null(inst.annotations.use)}};
  j["evidence"] = inst.evidence ? evidence_to_json(*inst.evidence) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json flags = nlohmann::ordered_json::array();
  for (const auto& f : inst.flags) flags.push_back({{"code", f.code}, {"message", f.message}});
  j["flags"] = std::move(flags);
  return j;
}

AnnotatedInstance annotated_from_json(const nlohmann::json& j) {
  AnnotatedInstance inst;
  inst.base = instance_from_json(j);
  try {
    inst.stream = parse_stream(require_string(j, "text")).stream;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnclosedParagraph) throw;
    throw Error(ErrorCode::MalformedRecord, "instance '" + inst.base.id + "': " + e.what());
  }
  if (auto a = j.find("annotations"); a != j.end() && a->is_object()) {
    inst.annotations.ret = token_field(*a, "ret", TokenKind::Ret);
    inst.annotations.rel = token_field(*a, "rel", TokenKind::Rel);
    inst.annotations.sup = token_field(*a, "sup", TokenKind::Sup);
    inst.annotations.use = token_field(*a, "use", TokenKind::Use);
  }
  if (auto ev = j.find("evidence"); ev != j.end() && !ev->is_null()) inst.evidence = evidence_from_json(*ev);
  if (auto flags = j.find("flags"); flags != j.end() && flags->is_array()) {
    for (const auto& f : *flags) inst.flags.push_back({require_string(f, "code"), optional_string(f, "message")});
  }
  return inst;
}

std::vector<AnnotatedInstance> read_annotated_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<AnnotatedInstance> out;
  for_each_line(in, [&](std::size_t line, std::string_view text) {
    try {
      out.push_back(annotated_from_json(parse_json_record(text, line)));
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(line) + ": " + e.message());
    }
  });
  return out;
}

nlohmann::ordered_json training_record(const AnnotatedInstance& inst) {
  return {{"id", inst.base.id},
          {"instruction", inst.base.instruction},
          {"input", inst.base.input},
          {"text", serialize_stream(inst.stream)}};
}

void export_training(std::ostream& out, const std::vector<AnnotatedInstance>& instances) {
  for (const auto& inst : instances) write_json_line(out, training_record(inst));
  if (!out) throw Error(ErrorCode::Io, "failed writing training records");
}

void export_training_file(const std::string& path, const std::vector<AnnotatedInstance>& instances) {
  std::ofstream out = open_output(path);
  export_training(out, instances);
}

}  // namespace rrag
