#include "rrag/eval.hpp"

#include <algorithm>
#include <numeric>

#include "rrag/error.hpp"
#include "rrag/jsonl.hpp"
#include "text_util.hpp"

namespace rrag {
namespace {

bool is_ascii_punct(char c) noexcept {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

bool is_alnum(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

char lower(char c) noexcept { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

/// Option key whose single letter equals `c`, case-insensitively.
const std::string* option_for(char c, const std::vector<std::string>& options) {
  for (const auto& o : options) {
    if (o.size() == 1 && lower(o[0]) == lower(c)) return &o;
  }
  return nullptr;
}

/// A letter at `pos` either parenthesized or standing alone as a word.
const std::string* letter_at(std::string_view text, std::size_t pos, const std::vector<std::string>& options,
                             bool allow_bare) {
  if (pos < text.size() && text[pos] == '(') {
    if (pos + 2 < text.size() && text[pos + 2] == ')') return option_for(text[pos + 1], options);
    return nullptr;
  }
  if (!allow_bare || pos >= text.size()) return nullptr;
  if (pos + 1 < text.size() && is_alnum(text[pos + 1])) return nullptr;
  return option_for(text[pos], options);
}

std::size_t skip_spaces(std::string_view text, std::size_t pos) {
  while (pos < text.size() && detail::is_space(text[pos])) ++pos;
  return pos;
}

/// Leftmost "<keyword> X" match; the keyword must start a word.
const std::string* after_keyword(std::string_view text, std::string_view lowered, std::string_view keyword,
                                 const std::vector<std::string>& options) {
  for (std::size_t at = lowered.find(keyword); at != std::string_view::npos;
       at = lowered.find(keyword, at + 1)) {
    if (at > 0 && is_alnum(lowered[at - 1])) continue;
    const std::size_t pos = skip_spaces(text, at + keyword.size());
    if (pos == at + keyword.size() && pos < text.size() && text[pos] != '(') continue;
    if (const auto* hit = letter_at(text, pos, options, true)) return hit;
  }
  return nullptr;
}

std::vector<std::string> ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  std::vector<std::string> out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string g = tokens[i];
    for (std::size_t k = 1; k < n; ++k) {
      g += '\x1f';
      g += tokens[i + k];
    }
    out.push_back(std::move(g));
  }
  return out;
}

nlohmann::ordered_json rouge_json(const RougeScore& s) {
  return {{"recall", s.recall}, {"precision", s.precision}, {"f1", s.f1}};
}

nlohmann::ordered_json optional_rouge(const std::optional<RougeScore>& s) {
  return s ? rouge_json(*s) : nlohmann::ordered_json(nullptr);
}

template <class T>
nlohmann::ordered_json or_null(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json stratum_json(const StratumAccuracy& s) {
  return {{"count", s.count}, {"correct", s.correct}, {"accuracy", or_null(s.accuracy)}};
}

void finish(StratumAccuracy& s) {
  if (s.count > 0) s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.count);
}

struct RougeMean {
  RougeScore sum;
  std::size_t n = 0;
  void add(const RougeScore& s) {
    sum.recall += s.recall;
    sum.precision += s.precision;
    sum.f1 += s.f1;
    ++n;
  }
  std::optional<RougeScore> mean() const {
    if (n == 0) return std::nullopt;
    const double d = static_cast<double>(n);
    return RougeScore{sum.recall / d, sum.precision / d, sum.f1 / d};
  }
};

}  // namespace

std::optional<std::string> extract_answer(std::string_view text, const std::vector<std::string>& options) {
  const std::string lowered = detail::ascii_lower(text);
  if (const auto* hit = after_keyword(text, lowered, "answer is", options)) return *hit;
  if (const auto* hit = after_keyword(text, lowered, "option", options)) return *hit;
  for (std::size_t at = text.find('('); at != std::string_view::npos; at = text.find('(', at + 1)) {
    if (const auto* hit = letter_at(text, at, options, false)) return *hit;
  }
  return std::nullopt;
}

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (std::string_view word : detail::split_whitespace(text)) {
    std::size_t b = 0;
    std::size_t e = word.size();
    while (b < e && is_ascii_punct(word[b])) ++b;
    while (e > b && is_ascii_punct(word[e - 1])) --e;
    if (b < e) out.push_back(detail::ascii_lower(word.substr(b, e - b)));
  }
  return out;
}

RougeScore rouge_from_counts(std::size_t overlap, std::size_t candidate_total, std::size_t reference_total) {
  if (candidate_total == 0 || reference_total == 0) return {};
  RougeScore s;
  s.recall = static_cast<double>(overlap) / static_cast<double>(reference_total);
  s.precision = static_cast<double>(overlap) / static_cast<double>(candidate_total);
  if (s.recall + s.precision > 0.0) s.f1 = 2.0 * s.recall * s.precision / (s.recall + s.precision);
  return s;
}

RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "rouge n must be at least 1");
  auto cand = ngrams(rouge_tokens(candidate), n);
  auto ref = ngrams(rouge_tokens(reference), n);
  std::map<std::string, std::size_t> ref_counts;
  for (const auto& g : ref) ++ref_counts[g];
  std::size_t overlap = 0;
  for (const auto& g : cand) {
    auto it = ref_counts.find(g);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  return rouge_from_counts(overlap, cand.size(), ref.size());
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = rouge_tokens(candidate);
  const auto ref = rouge_tokens(reference);
  return rouge_from_counts(lcs_length(cand, ref), cand.size(), ref.size());
}

std::vector<Triplet> knn_fewshot(std::string_view query, const std::vector<InstructionInstance>& pool,
                                 std::size_t k, const Embedder& embedder) {
  if (k > pool.size()) {
    throw Error(ErrorCode::NotEnoughInstances,
                "asked for " + std::to_string(k) + " neighbours from a pool of " + std::to_string(pool.size()));
  }
  const std::vector<float> q = embedder.embed(query);
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    scored.emplace_back(cosine_similarity(q, embedder.embed(pool[i].instruction + " " + pool[i].input)), i);
  }
  std::stable_sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return pool[a.second].id < pool[b.second].id;
  });
  std::vector<Triplet> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& inst = pool[scored[i].second];
    out.push_back({inst.instruction, inst.input, inst.output});
  }
  return out;
}

GoldRecord gold_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, "gold record is not an object");
  GoldRecord g;
  g.id = require_string(j, "id");
  if (j.contains("gold")) {
    MCQItem item;
    item.id = g.id;
    item.question = optional_string(j, "question");
    item.gold = require_string(j, "gold");
    auto options = j.find("options");
    if (options == j.end() || !options->is_object()) {
      throw Error(ErrorCode::MissingField, "gold '" + g.id + "' needs an 'options' object");
    }
    for (const auto& [key, value] : options->items()) {
      if (!value.is_string()) throw Error(ErrorCode::MalformedRecord, "option '" + key + "' is not a string");
      item.options[key] = value.get<std::string>();
    }
    if (item.options.size() < 2 || !item.options.contains(item.gold)) {
      throw Error(ErrorCode::MalformedRecord,
                  "gold '" + g.id + "' needs at least two options including the gold letter");
    }
    g.mcq = std::move(item);
  } else {
    g.answer = require_string(j, "answer");
  }
  return g;
}

std::vector<GoldRecord> read_gold_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<GoldRecord> out;
  for_each_line(in, [&](std::size_t line, std::string_view text) {
    try {
      out.push_back(gold_from_json(parse_json_record(text, line)));
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(line) + ": " + e.message());
    }
  });
  return out;
}

EvalReport analyze_traces(const std::vector<InferenceTrace>& traces, const std::vector<GoldRecord>& gold,
                          const SimilarityMetric* similarity) {
  if (traces.size() != gold.size()) {
    throw Error(ErrorCode::IdMismatch, std::to_string(traces.size()) + " traces but " +
                                           std::to_string(gold.size()) + " gold records");
  }
  EvalReport report;
  report.total = traces.size();
  std::size_t retrieved = 0;
  std::size_t mcq_correct = 0;
  std::map<std::string, std::size_t> usage;
  RougeMean r1, r2, rl;
  double sim_sum = 0.0;
  std::size_t sim_n = 0;

  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    const auto& g = gold[i];
    if (t.query.id != g.id) {
      throw Error(ErrorCode::IdMismatch,
                  "record " + std::to_string(i) + ": trace '" + t.query.id + "' vs gold '" + g.id + "'");
    }
    ItemResult item;
    item.id = g.id;
    item.gate = t.gate_decision();
    item.failed = t.error.has_value();
    const bool was_retrieved = item.gate == GateDecision::Retrieve;
    if (was_retrieved) ++retrieved;
    for (const auto& [corpus, count] : t.evidence_corpora()) usage[corpus] += count;

    if (g.mcq) {
      std::vector<std::string> letters;
      for (const auto& [letter, text] : g.mcq->options) letters.push_back(letter);
      item.predicted = item.failed ? std::nullopt : extract_answer(t.final_text, letters);
      item.correct = item.predicted && *item.predicted == g.mcq->gold;
      ++report.mcq_count;
      StratumAccuracy& stratum = was_retrieved ? report.retrieved : report.not_retrieved;
      ++stratum.count;
      if (*item.correct) {
        ++stratum.correct;
        ++mcq_correct;
      }
    } else if (g.answer) {
      item.r1 = rouge_n(t.final_text, *g.answer, 1);
      item.r2 = rouge_n(t.final_text, *g.answer, 2);
      item.rl = rouge_l(t.final_text, *g.answer);
      r1.add(*item.r1);
      r2.add(*item.r2);
      rl.add(*item.rl);
      if (similarity != nullptr) {
        item.similarity = similarity->score(t.final_text, *g.answer);
        sim_sum += *item.similarity;
        ++sim_n;
      }
    }
    report.items.push_back(std::move(item));
  }

  if (report.mcq_count > 0) {
    report.accuracy = static_cast<double>(mcq_correct) / static_cast<double>(report.mcq_count);
  }
  finish(report.retrieved);
  finish(report.not_retrieved);
  report.r1 = r1.mean();
  report.r2 = r2.mean();
  report.rl = rl.mean();
  if (similarity != nullptr) {
    report.similarity_name = similarity->name();
    if (sim_n > 0) report.similarity = sim_sum / static_cast<double>(sim_n);
  }
  if (report.total > 0) {
    report.retrieve_fraction = static_cast<double>(retrieved) / static_cast<double>(report.total);
  }
  const std::size_t used = std::accumulate(usage.begin(), usage.end(), std::size_t{0},
                                           [](std::size_t acc, const auto& kv) { return acc + kv.second; });
  for (const auto& [corpus, count] : usage) {
    report.corpus_usage[corpus] = static_cast<double>(count) / static_cast<double>(used);
  }
  return report;
}

nlohmann::ordered_json eval_report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["total"] = report.total;
  j["mcq_count"] = report.mcq_count;
  j["accuracy"] = or_null(report.accuracy);
  j["stratified"] = {{"retrieved", stratum_json(report.retrieved)},
                     {"not_retrieved", stratum_json(report.not_retrieved)}};
  j["rouge"] = {{"r1", optional_rouge(report.r1)},
                {"r2", optional_rouge(report.r2)},
                {"rl", optional_rouge(report.rl)}};
  j["similarity"] = report.similarity_name.empty()
                        ? nlohmann::ordered_json(nullptr)
                        : nlohmann::ordered_json{{"metric", report.similarity_name},
                                                 {"mean", or_null(report.similarity)}};
  j["retrieve_fraction"] = report.retrieve_fraction;
  nlohmann::ordered_json usage = nlohmann::ordered_json::object();
  for (const auto& [corpus, ratio] : report.corpus_usage) usage[corpus] = ratio;
  j["corpus_usage"] = std::move(usage);
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  for (const auto& it : report.items) {
    nlohmann::ordered_json ij;
    ij["id"] = it.id;
    ij["gate"] = it.gate ? nlohmann::ordered_json(to_string(*it.gate)) : nlohmann::ordered_json(nullptr);
    ij["failed"] = it.failed;
    ij["predicted"] = or_null(it.predicted);
    ij["correct"] = or_null(it.correct);
    ij["r1"] = optional_rouge(it.r1);
    ij["r2"] = optional_rouge(it.r2);
    ij["rl"] = optional_rouge(it.rl);
    ij["similarity"] = or_null(it.similarity);
    items.push_back(std::move(ij));
  }
  j["items"] = std::move(items);
  return j;
}

}  // namespace rrag
