#pragma once

// Retrieval-gated decoding controller.
//
// Each generation segment starts with a RET decision. The gate thresholds the
// normalized [Retrieval] probability; on Retrieve, one continuation is
// generated per evidence passage and the best-scoring candidate wins. A chosen
// segment that ends in a RET token opens another segment, up to a cap.
//
// Trace JSONL (one record per query):
//   {"id", "query": {"instruction", "input", "fewshot": [...]},
//    "gate_decision": "Retrieve"|"NoRetrieve"|null, "gate_ratio": float|null,
//    "segments": [{"gate", "gate_ratio", "gate_distribution",
//                  "candidates": [{"evidence": {...}|null, "text",
//                                  "distributions": [...], "score": {...}}],
//                  "chosen", "diagnostics": [str]}],
//    "final_text", "evidence_corpora": {corpus: count},
//    "error": {"code", "message"}|null}

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rrag/backend.hpp"
#include "rrag/error.hpp"
#include "rrag/prompts.hpp"
#include "rrag/retriever.hpp"
#include "rrag/scoring.hpp"
#include "rrag/tokens.hpp"

namespace rrag {

struct Query {
  std::string id;
  std::string instruction;
  std::string input;
  std::vector<Triplet> fewshot;
  friend bool operator==(const Query&, const Query&) = default;
};

/// `{"id", "instruction", "input"?, "fewshot"?: [{"instruction", "input", "output"}]}`
Query query_from_json(const nlohmann::json& j);
nlohmann::ordered_json query_to_json(const Query& q, bool with_id = true);
std::vector<Query> read_queries_file(const std::string& path);

/// Text used to query the retriever: instruction, plus input when present.
std::string retrieval_query(const Query& q);

struct InferenceConfig {
  ScoringConfig scoring;
  std::size_t max_segments = 8;
  std::size_t candidate_workers = 1;  // concurrent candidate generations per segment
  int max_tokens = 512;
  void validate() const;
};

struct Candidate {
  std::optional<Evidence> evidence;
  SegmentStream segment;
  /// Control distributions the backend returned for the generated part, in
  /// token order. Tokens the controller forced into the prompt have none.
  std::vector<TokenDistribution> distributions;
  CandidateScore score;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct SegmentTrace {
  GateDecision gate = GateDecision::NoRetrieve;
  double gate_ratio = 0.0;
  TokenDistribution gate_distribution = TokenDistribution(TokenKind::Ret, {});
  std::vector<Candidate> candidates;
  std::size_t chosen = 0;
  std::vector<std::string> diagnostics;
  friend bool operator==(const SegmentTrace&, const SegmentTrace&) = default;
};

struct TraceError {
  ErrorCode code;
  std::string message;
  friend bool operator==(const TraceError&, const TraceError&) = default;
};

struct InferenceTrace {
  Query query;
  std::vector<SegmentTrace> segments;
  std::string final_text;
  std::optional<TraceError> error;

  /// Decision and ratio of the first segment; nullopt for failed queries.
  std::optional<GateDecision> gate_decision() const;
  std::optional<double> gate_ratio() const;
  /// Corpus of every chosen evidence passage, counted over segments.
  std::map<std::string, std::size_t> evidence_corpora() const;

  friend bool operator==(const InferenceTrace&, const InferenceTrace&) = default;
};

nlohmann::ordered_json trace_to_json(const InferenceTrace& trace);
InferenceTrace trace_from_json(const nlohmann::json& j);
std::vector<InferenceTrace> read_traces_file(const std::string& path);

/// Recomputes a candidate's score from its first REL, SUP, and USE
/// distributions and its recorded mean logprob.
CandidateScore rescore_candidate(const Candidate& c, const ScoringConfig& cfg);

/// Index of the highest combined score; the lowest index wins ties.
std::size_t select_candidate(const std::vector<Candidate>& candidates);

/// Runs one query. `evidence` may be null, in which case a Retrieve decision
/// falls back to generation without evidence (recorded as a diagnostic).
/// Errors from the backend or retriever propagate.
InferenceTrace run_inference(const Query& q, const ModelBackend& generator,
                             const EvidenceSource* evidence, const InferenceConfig& cfg);

/// run_inference over every query on up to `workers` threads, in input order.
/// A failing query yields a trace carrying `error`; the batch continues.
std::vector<InferenceTrace> run_batch(const std::vector<Query>& queries, const ModelBackend& generator,
                                      const EvidenceSource* evidence, const InferenceConfig& cfg,
                                      std::size_t workers = 1);

}  // namespace rrag
