#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rrag/annotate.hpp"
#include "rrag/backend.hpp"
#include "rrag/corpus.hpp"
#include "rrag/inference.hpp"
#include "rrag/prompts.hpp"
#include "rrag/retriever.hpp"
#include "rrag/scoring.hpp"
#include "rrag/tokens.hpp"

namespace rrag::testing {

inline std::string data_path(const std::string& name) {
  return std::string(RRAG_TEST_DATA_DIR) + "/" + name;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// File contents without the trailing newline.
inline std::string read_line_file(const std::string& path) {
  std::string s = read_text(path);
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rrag_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline TokenDistribution ret_dist(double yes, double no, double cont = 0.0) {
  return TokenDistribution(TokenKind::Ret, {{RetValue::Retrieval, yes},
                                            {RetValue::NoRetrieval, no},
                                            {RetValue::Continue, cont}});
}

inline TokenDistribution rel_dist(double rel, double irr) {
  return TokenDistribution(TokenKind::Rel, {{RelValue::Relevant, rel}, {RelValue::Irrelevant, irr}});
}

inline TokenDistribution sup_dist(double full, double partial, double none) {
  return TokenDistribution(TokenKind::Sup, {{SupValue::FullySupported, full},
                                            {SupValue::PartiallySupported, partial},
                                            {SupValue::NoSupport, none}});
}

inline TokenDistribution use_dist(double u1, double u2, double u3, double u4, double u5) {
  return TokenDistribution(TokenKind::Use, {{UseValue::U1, u1}, {UseValue::U2, u2}, {UseValue::U3, u3},
                                            {UseValue::U4, u4}, {UseValue::U5, u5}});
}

inline GenerationResponse response(std::string text, std::vector<TokenDistribution> probs = {},
                                   std::vector<double> logprobs = {}) {
  return GenerationResponse{std::move(text), std::move(probs), std::move(logprobs)};
}

/// Documents of random "wN" words drawn from a small vocabulary.
inline SourceDocument random_document(std::mt19937_64& rng, const std::string& corpus, const std::string& id,
                                      std::size_t words, std::size_t vocab = 400) {
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
  std::string body;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) body += ' ';
    body += "w" + std::to_string(pick(rng));
  }
  return {corpus, id, "", body};
}

/// Chunks with random short texts, for retrieval tests.
inline std::vector<Chunk> random_chunks(std::mt19937_64& rng, const std::string& corpus, std::size_t n,
                                        std::size_t vocab = 60) {
  std::uniform_int_distribution<std::size_t> len(1, 12);
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
  std::vector<Chunk> out;
  for (std::size_t i = 0; i < n; ++i) {
    Chunk c;
    c.corpus_name = corpus;
    c.doc_id = "d" + std::to_string(i / 3);
    c.chunk_index = static_cast<std::uint32_t>(i % 3);
    c.word_offset = c.chunk_index * 96;
    const std::size_t words = len(rng);
    for (std::size_t w = 0; w < words; ++w) {
      if (w) c.text += ' ';
      c.text += "t" + std::to_string(pick(rng));
    }
    c.word_count = static_cast<std::uint32_t>(words);
    out.push_back(std::move(c));
  }
  return out;
}

/// Fixed evidence list that counts how often it is asked.
class StubEvidence final : public EvidenceSource {
 public:
  explicit StubEvidence(std::vector<Evidence> evidence = {}) : evidence_(std::move(evidence)) {}
  std::vector<Evidence> retrieve(std::string_view) const override {
    calls_.fetch_add(1);
    return evidence_;
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  std::vector<Evidence> evidence_;
  mutable std::atomic<std::size_t> calls_{0};
};

inline Evidence make_evidence(const std::string& corpus, const std::string& doc_id, const std::string& text,
                              double score = 1.0) {
  Chunk c;
  c.corpus_name = corpus;
  c.doc_id = doc_id;
  c.text = text;
  std::istringstream words(text);
  c.word_count = static_cast<std::uint32_t>(
      std::distance(std::istream_iterator<std::string>(words), std::istream_iterator<std::string>()));
  return Evidence{c, score, score};
}

/// Critic replies for one instance. REL and SUP are only asked when the RET
/// reply yields [Retrieval] and evidence is found.
struct CriticReplies {
  std::string ret;
  std::string rel;
  std::string sup;
  std::string use;
};

/// Exact-match mock entries answering the critic prompts for `inst`.
inline void add_critic_entries(std::vector<MockBackend::Entry>& entries, const InstructionInstance& inst,
                               const CriticReplies& replies, const std::string& evidence_text = "") {
  auto add = [&](TokenKind kind, std::string_view evidence, const std::string& reply) {
    entries.push_back({render_critic_prompt(kind, inst.instruction, inst.input, inst.output, evidence),
                       MockBackend::Match::Exact, response(reply)});
  };
  add(TokenKind::Ret, "", replies.ret);
  add(TokenKind::Use, "", replies.use);
  if (!evidence_text.empty()) {
    add(TokenKind::Rel, evidence_text, replies.rel);
    add(TokenKind::Sup, evidence_text, replies.sup);
  }
}

/// Trace whose segments all carry `gate`; each corpus name becomes one segment
/// whose chosen candidate cites that corpus.
inline InferenceTrace make_trace(const std::string& id, GateDecision gate, const std::string& final_text,
                                 const std::vector<std::string>& corpora = {}) {
  InferenceTrace t;
  t.query.id = id;
  t.query.instruction = "q " + id;
  t.final_text = final_text;
  auto segment = [&](std::optional<Evidence> ev) {
    SegmentTrace seg;
    seg.gate = gate;
    seg.gate_ratio = gate == GateDecision::Retrieve ? 0.9 : 0.1;
    Candidate c;
    c.evidence = std::move(ev);
    c.segment = parse_stream(final_text).stream;
    seg.candidates.push_back(std::move(c));
    return seg;
  };
  if (corpora.empty()) t.segments.push_back(segment(std::nullopt));
  for (const auto& corpus : corpora) t.segments.push_back(segment(make_evidence(corpus, id, "passage")));
  return t;
}

}  // namespace rrag::testing
