#pragma once

// Evaluation: answer extraction and accuracy, Rouge-1/2/L, nearest-neighbour
// few-shot selection, and retrieval analyses over inference traces.
//
// Rouge tokenization: lowercase, split on whitespace, strip ASCII punctuation
// from both ends of each token, drop tokens that become empty.

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rrag/annotate.hpp"
#include "rrag/embedding.hpp"
#include "rrag/inference.hpp"
#include "rrag/prompts.hpp"

namespace rrag {

/// First match in precedence order: "answer is (X)" or "answer is X",
/// then "Option X", then a standalone "(X)". Matching is case-insensitive and
/// only letters in `options` count. The letter is returned as given in `options`.
std::optional<std::string> extract_answer(std::string_view text, const std::vector<std::string>& options);

std::vector<std::string> rouge_tokens(std::string_view text);

struct RougeScore {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  friend bool operator==(const RougeScore&, const RougeScore&) = default;
};

/// From an overlap count and the two sides' sizes; all zero if either is 0.
RougeScore rouge_from_counts(std::size_t overlap, std::size_t candidate_total, std::size_t reference_total);

/// n-gram multiset overlap (n >= 1, InvalidArgument otherwise).
RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n);
/// Longest common subsequence over tokens.
RougeScore rouge_l(std::string_view candidate, std::string_view reference);
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Pluggable learned-similarity metric (e.g. embedding-based F1). None ships
/// by default; reports include it only when one is supplied.
class SimilarityMetric {
 public:
  virtual ~SimilarityMetric() = default;
  virtual std::string name() const = 0;
  virtual double score(std::string_view candidate, std::string_view reference) const = 0;
};

/// The k pool items most cosine-similar to `query`, comparing against
/// embed(instruction + " " + input); ties by id ascending.
/// Throws Error(NotEnoughInstances) when k > pool.size().
std::vector<Triplet> knn_fewshot(std::string_view query, const std::vector<InstructionInstance>& pool,
                                 std::size_t k, const Embedder& embedder);

struct MCQItem {
  std::string id;
  std::string question;
  std::map<std::string, std::string> options;
  std::string gold;
};

/// Gold record: multiple choice `{"id", "question"?, "options", "gold"}` or
/// long form `{"id", "answer"}`.
struct GoldRecord {
  std::string id;
  std::optional<MCQItem> mcq;
  std::optional<std::string> answer;
};

GoldRecord gold_from_json(const nlohmann::json& j);
std::vector<GoldRecord> read_gold_file(const std::string& path);

struct ItemResult {
  std::string id;
  std::optional<GateDecision> gate;
  std::optional<std::string> predicted;  // extracted letter (MCQ only)
  std::optional<bool> correct;           // MCQ only
  std::optional<RougeScore> r1, r2, rl;  // long form only
  std::optional<double> similarity;      // long form, when a metric is supplied
  bool failed = false;                   // trace carries an error
};

struct StratumAccuracy {
  std::size_t count = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;  // null for an empty stratum
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t mcq_count = 0;
  std::optional<double> accuracy;
  StratumAccuracy retrieved;
  StratumAccuracy not_retrieved;
  std::optional<RougeScore> r1, r2, rl;  // means over long-form items
  std::optional<double> similarity;
  std::string similarity_name;
  double retrieve_fraction = 0.0;
  std::map<std::string, double> corpus_usage;  // sums to 1 when non-empty
  std::vector<ItemResult> items;
};

/// Aligns traces and gold by position and requires equal ids (IdMismatch
/// otherwise). Unanswered or failed MCQ items count as incorrect; failed
/// traces, which never reached a gate, fall in the not-retrieved stratum.
EvalReport analyze_traces(const std::vector<InferenceTrace>& traces, const std::vector<GoldRecord>& gold,
                          const SimilarityMetric* similarity = nullptr);

nlohmann::ordered_json eval_report_to_json(const EvalReport& report);

}  // namespace rrag
