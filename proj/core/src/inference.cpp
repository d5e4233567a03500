#include "rrag/inference.hpp"

#include <algorithm>

#include "rrag/jsonl.hpp"
#include "rrag/parallel.hpp"
#include "text_util.hpp"

namespace rrag {
namespace {

const TokenDistribution* first_of(const std::vector<TokenDistribution>& ds, TokenKind kind) {
  for (const auto& d : ds) {
    if (d.kind() == kind) return &d;
  }
  return nullptr;
}

Candidate make_candidate(std::optional<Evidence> evidence, SegmentStream prefix,
                         const GenerationResponse& resp, const ScoringConfig& cfg) {
  Candidate c;
  c.evidence = std::move(evidence);
  // Parsing prefix and completion together keeps the stream canonical, so the
  // serialized trace text reparses to the same items.
  c.segment = prefix.empty() ? parse_stream(resp.text).stream
                             : parse_stream(serialize_stream(prefix) + " " + resp.text).stream;
  c.distributions = resp.control_probs;
  c.score.lm_logprob_mean = mean_logprob(resp);
  c.score = rescore_candidate(c, cfg);
  return c;
}

/// True when the generated part of `resp` produced text and then closed with
/// a RET token, i.e. the generator asks for another segment.
bool requests_continuation(const GenerationResponse& resp) {
  const SegmentStream stream = parse_stream(resp.text).stream;
  if (stream.size() < 2) return false;
  const auto* token = std::get_if<ReflectiveToken>(&stream.back());
  if (token == nullptr || token->kind() != TokenKind::Ret) return false;
  return std::any_of(stream.begin(), stream.end() - 1,
                     [](const Segment& s) { return std::holds_alternative<Text>(s); });
}

nlohmann::ordered_json score_to_json(const CandidateScore& s) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  return {{"s_rel", opt(s.s_rel)},
          {"s_sup", opt(s.s_sup)},
          {"s_use", opt(s.s_use)},
          {"critique", s.critique},
          {"lm_logprob_mean", s.lm_logprob_mean},
          {"combined", s.combined}};
}

double number_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw Error(ErrorCode::MissingField, std::string("trace needs numeric '") + key + "'");
  }
  return it->get<double>();
}

CandidateScore score_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* key) -> std::optional<double> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw Error(ErrorCode::MalformedRecord, std::string("'") + key + "' is not a number");
    return it->get<double>();
  };
  CandidateScore s;
  s.s_rel = opt("s_rel");
  s.s_sup = opt("s_sup");
  s.s_use = opt("s_use");
  s.critique = number_field(j, "critique");
  s.lm_logprob_mean = number_field(j, "lm_logprob_mean");
  s.combined = number_field(j, "combined");
  return s;
}

GateDecision gate_from_json(const nlohmann::json& j) {
  auto d = j.is_string() ? parse_gate_decision(j.get<std::string>()) : std::nullopt;
  if (!d) throw Error(ErrorCode::MalformedRecord, "trace has an invalid gate decision");
  return *d;
}

class Controller {
 public:
  Controller(const Query& q, const ModelBackend& generator, const EvidenceSource* evidence,
             const InferenceConfig& cfg)
      : q_(q), generator_(generator), evidence_(evidence), cfg_(cfg) {}

  InferenceTrace run() {
    InferenceTrace trace;
    trace.query = q_;
    std::string context = render_generator_prompt(q_.instruction, q_.input, q_.fewshot);

    // The first gate comes from a probe generation; later gates come from
    // the RET token that closed the previous segment.
    GenerationResponse probe = generate(context, {TokenKind::Ret});
    const TokenDistribution* probe_gate = first_of(probe.control_probs, TokenKind::Ret);
    std::optional<TokenDistribution> gate = *probe_gate;
    std::optional<GenerationResponse> reusable;
    const SegmentStream probe_stream = parse_stream(probe.text).stream;
    if (!probe_stream.empty()) {
      const auto* t = std::get_if<ReflectiveToken>(&probe_stream.front());
      if (t != nullptr && t->is(RetValue::NoRetrieval) && probe_gate == &probe.control_probs.front()) {
        reusable = std::move(probe);
      }
    }

    std::vector<std::string> chosen_texts;
    while (gate) {
      SegmentTrace seg;
      seg.gate_distribution = *gate;
      seg.gate_ratio = retrieval_ratio(*gate);
      seg.gate = adaptive_gate(*gate, cfg_.scoring.gate);
      gate.reset();

      std::vector<GenerationResponse> responses;
      if (seg.gate == GateDecision::Retrieve) {
        std::string query = retrieval_query(q_);
        if (!chosen_texts.empty()) query += " " + chosen_texts.back();
        std::vector<Evidence> found;
        if (evidence_ != nullptr) found = evidence_->retrieve(detail::trim(query));
        if (found.empty()) {
          seg.diagnostics.push_back(std::string(to_string(ErrorCode::EmptyCandidates)) +
                                    ": retrieval returned no evidence; generating without it");
        } else {
          responses = generate_with_evidence(context, found, seg);
        }
      }
      if (seg.candidates.empty()) {
        responses = {generate_without_evidence(context, reusable, seg)};
      }
      reusable.reset();

      seg.chosen = select_candidate(seg.candidates);
      const Candidate& best = seg.candidates[seg.chosen];
      const GenerationResponse& best_resp = responses[seg.chosen];
      SegmentStream carried = best.segment;
      if (requests_continuation(best_resp)) {
        if (trace.segments.size() + 1 < cfg_.max_segments) {
          gate = best.distributions.back();
          carried.pop_back();
        } else {
          seg.diagnostics.push_back("segment cap of " + std::to_string(cfg_.max_segments) +
                                    " reached; stopping");
        }
      }
      chosen_texts.push_back(strip_tokens(best.segment));
      context += serialize_stream(carried);
      context += ' ';
      trace.segments.push_back(std::move(seg));
    }

    for (const auto& text : chosen_texts) {
      if (text.empty()) continue;
      if (!trace.final_text.empty()) trace.final_text += ' ';
      trace.final_text += text;
    }
    return trace;
  }

 private:
  GenerationResponse generate(const std::string& prompt, std::vector<TokenKind> want) const {
    GenerationRequest req;
    req.prompt = prompt;
    req.max_tokens = cfg_.max_tokens;
    req.want_control_probs = std::move(want);
    return checked_generate(generator_, req);
  }

  std::vector<GenerationResponse> generate_with_evidence(const std::string& context,
                                                         const std::vector<Evidence>& found,
                                                         SegmentTrace& seg) const {
    const std::string opener(surface_form(RetValue::Retrieval));
    auto responses = parallel_map(found.size(), cfg_.candidate_workers, [&](std::size_t i) {
      std::string prompt = context + opener + std::string(k_paragraph_open) + found[i].chunk.text +
                           std::string(k_paragraph_close);
      return generate(prompt, {TokenKind::Rel, TokenKind::Sup});
    });
    for (std::size_t i = 0; i < found.size(); ++i) {
      SegmentStream prefix{ReflectiveToken(RetValue::Retrieval), Paragraph{found[i].chunk.text}};
      seg.candidates.push_back(make_candidate(found[i], std::move(prefix), responses[i], cfg_.scoring));
    }
    return responses;
  }

  GenerationResponse generate_without_evidence(const std::string& context,
                                               std::optional<GenerationResponse>& reusable,
                                               SegmentTrace& seg) const {
    if (reusable) {
      seg.candidates.push_back(make_candidate(std::nullopt, {}, *reusable, cfg_.scoring));
      return *reusable;
    }
    const std::string opener(surface_form(RetValue::NoRetrieval));
    GenerationResponse resp = generate(context + opener, {});
    seg.candidates.push_back(
        make_candidate(std::nullopt, {ReflectiveToken(RetValue::NoRetrieval)}, resp, cfg_.scoring));
    return resp;
  }

  const Query& q_;
  const ModelBackend& generator_;
  const EvidenceSource* evidence_;
  const InferenceConfig& cfg_;
};

}  // namespace

Query query_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, "query is not an object");
  Query q;
  q.id = require_string(j, "id");
  q.instruction = require_string(j, "instruction");
  if (detail::trim(q.instruction).empty()) {
    throw Error(ErrorCode::MissingField, "query '" + q.id + "' has an empty instruction");
  }
  q.input = optional_string(j, "input");
  if (auto shots = j.find("fewshot"); shots != j.end() && !shots->is_null()) {
    if (!shots->is_array()) throw Error(ErrorCode::MalformedRecord, "'fewshot' must be an array");
    for (const auto& s : *shots) {
      q.fewshot.push_back({require_string(s, "instruction"), optional_string(s, "input"),
                           require_string(s, "output")});
    }
  }
  return q;
}

nlohmann::ordered_json query_to_json(const Query& q, bool with_id) {
  nlohmann::ordered_json j;
  if (with_id) j["id"] = q.id;
  j["instruction"] = q.instruction;
  j["input"] = q.input;
  nlohmann::ordered_json shots = nlohmann::ordered_json::array();
  for (const auto& s : q.fewshot) {
    shots.push_back({{"instruction", s.instruction}, {"input", s.input}, {"output", s.output}});
  }
  j["fewshot"] = std::move(shots);
  return j;
}

std::vector<Query> read_queries_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<Query> out;
  for_each_line(in, [&](std::size_t line, std::string_view text) {
    try {
      out.push_back(query_from_json(parse_json_record(text, line)));
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(line) + ": " + e.message());
    }
  });
  return out;
}

std::string retrieval_query(const Query& q) {
  if (q.input.empty()) return q.instruction;
  return q.instruction + " " + q.input;
}

void InferenceConfig::validate() const {
  scoring.validate();
  if (max_segments < 1) throw Error(ErrorCode::InvalidConfig, "max_segments must be at least 1");
  if (max_tokens < 1) throw Error(ErrorCode::InvalidConfig, "max_tokens must be at least 1");
}

std::optional<GateDecision> InferenceTrace::gate_decision() const {
  if (segments.empty()) return std::nullopt;
  return segments.front().gate;
}

std::optional<double> InferenceTrace::gate_ratio() const {
  if (segments.empty()) return std::nullopt;
  return segments.front().gate_ratio;
}

std::map<std::string, std::size_t> InferenceTrace::evidence_corpora() const {
  std::map<std::string, std::size_t> out;
  for (const auto& seg : segments) {
    const auto& c = seg.candidates.at(seg.chosen);
    if (c.evidence) ++out[c.evidence->chunk.corpus_name];
  }
  return out;
}

CandidateScore rescore_candidate(const Candidate& c, const ScoringConfig& cfg) {
  return score_candidate(first_of(c.distributions, TokenKind::Rel),
                         first_of(c.distributions, TokenKind::Sup),
                         first_of(c.distributions, TokenKind::Use), c.score.lm_logprob_mean, cfg);
}

std::size_t select_candidate(const std::vector<Candidate>& candidates) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates, "no candidates to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i].score.combined > candidates[best].score.combined) best = i;
  }
  return best;
}

InferenceTrace run_inference(const Query& q, const ModelBackend& generator,
                             const EvidenceSource* evidence, const InferenceConfig& cfg) {
  if (generator.role() != BackendRole::Generator) {
    throw Error(ErrorCode::InvalidArgument, "inference needs a Generator-role backend");
  }
  cfg.validate();
  return Controller(q, generator, evidence, cfg).run();
}

std::vector<InferenceTrace> run_batch(const std::vector<Query>& queries, const ModelBackend& generator,
                                      const EvidenceSource* evidence, const InferenceConfig& cfg,
                                      std::size_t workers) {
  return parallel_map(queries.size(), workers, [&](std::size_t i) {
    try {
      return run_inference(queries[i], generator, evidence, cfg);
    } catch (const Error& e) {
      InferenceTrace failed;
      failed.query = queries[i];
      failed.error = TraceError{e.code(), e.message()};
      return failed;
    }
  });
}

nlohmann::ordered_json trace_to_json(const InferenceTrace& trace) {
  nlohmann::ordered_json j;
  j["id"] = trace.query.id;
  j["query"] = query_to_json(trace.query, false);
  const auto gate = trace.gate_decision();
  j["gate_decision"] = gate ? nlohmann::ordered_json(to_string(*gate)) : nlohmann::ordered_json(nullptr);
  const auto ratio = trace.gate_ratio();
  j["gate_ratio"] = ratio ? nlohmann::ordered_json(*ratio) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json segments = nlohmann::ordered_json::array();
  for (const auto& seg : trace.segments) {
    nlohmann::ordered_json s;
    s["gate"] = to_string(seg.gate);
    s["gate_ratio"] = seg.gate_ratio;
    s["gate_distribution"] = distribution_to_json(seg.gate_distribution);
    nlohmann::ordered_json candidates = nlohmann::ordered_json::array();
    for (const auto& c : seg.candidates) {
      nlohmann::ordered_json cj;
      cj["evidence"] = c.evidence ? evidence_to_json(*c.evidence) : nlohmann::ordered_json(nullptr);
      cj["text"] = serialize_stream(c.segment);
      nlohmann::ordered_json dists = nlohmann::ordered_json::array();
      for (const auto& d : c.distributions) dists.push_back(distribution_to_json(d));
      cj["distributions"] = std::move(dists);
      cj["score"] = score_to_json(c.score);
      candidates.push_back(std::move(cj));
    }
    s["candidates"] = std::move(candidates);
    s["chosen"] = seg.chosen;
    s["diagnostics"] = seg.diagnostics;
    segments.push_back(std::move(s));
  }
  j["segments"] = std::move(segments);
  j["final_text"] = trace.final_text;
  nlohmann::ordered_json corpora = nlohmann::ordered_json::object();
  for (const auto& [name, count] : trace.evidence_corpora()) corpora[name] = count;
  j["evidence_corpora"] = std::move(corpora);
  j["error"] = trace.error ? nlohmann::ordered_json{{"code", to_string(trace.error->code)},
                                                    {"message", trace.error->message}}
                           : nlohmann::ordered_json(nullptr);
  return j;
}

InferenceTrace trace_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, "trace is not an object");
  InferenceTrace t;
  auto query = j.find("query");
  if (query == j.end() || !query->is_object()) throw Error(ErrorCode::MissingField, "trace needs 'query'");
  nlohmann::json qj = *query;
  qj["id"] = require_string(j, "id");
  t.query = query_from_json(qj);
  t.final_text = require_string(j, "final_text");
  if (auto segs = j.find("segments"); segs != j.end() && segs->is_array()) {
    for (const auto& s : *segs) {
      SegmentTrace seg;
      seg.gate = gate_from_json(s.value("gate", nlohmann::json()));
      seg.gate_ratio = number_field(s, "gate_ratio");
      seg.gate_distribution = distribution_from_json(s.at("gate_distribution"));
      for (const auto& cj : s.at("candidates")) {
        Candidate c;
        if (auto ev = cj.find("evidence"); ev != cj.end() && !ev->is_null()) {
          c.evidence = evidence_from_json(*ev);
        }
        c.segment = parse_stream(require_string(cj, "text")).stream;
        for (const auto& d : cj.at("distributions")) c.distributions.push_back(distribution_from_json(d));
        c.score = score_from_json(cj.at("score"));
        seg.candidates.push_back(std::move(c));
      }
      seg.chosen = s.at("chosen").get<std::size_t>();
      if (seg.chosen >= seg.candidates.size()) {
        throw Error(ErrorCode::MalformedRecord, "'chosen' is out of range");
      }
      seg.diagnostics = s.value("diagnostics", std::vector<std::string>{});
      t.segments.push_back(std::move(seg));
    }
  }
  if (auto err = j.find("error"); err != j.end() && !err->is_null()) {
    auto code = parse_error_code(require_string(*err, "code"));
    if (!code) throw Error(ErrorCode::MalformedRecord, "trace error has an unknown code");
    t.error = TraceError{*code, require_string(*err, "message")};
  }
  return t;
}

std::vector<InferenceTrace> read_traces_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<InferenceTrace> out;
  for_each_line(in, [&](std::size_t line, std::string_view text) {
    try {
      out.push_back(trace_from_json(parse_json_record(text, line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, path + ":" + std::to_string(line) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(line) + ": " + e.message());
    }
  });
  return out;
}

}  // namespace rrag
