#include "rrag/retriever.hpp"

#include <algorithm>
#include <cmath>

#include "rrag/error.hpp"
#include "rrag/jsonl.hpp"
#include "rrag/parallel.hpp"

namespace rrag {

EmbeddingIndex::EmbeddingIndex(std::string corpus_name, std::size_t dim, std::vector<Chunk> chunks,
                               std::vector<float> vectors)
    : corpus_name_(std::move(corpus_name)),
      dim_(dim),
      chunks_(std::move(chunks)),
      vectors_(std::move(vectors)) {
  if (dim_ == 0 || vectors_.size() != chunks_.size() * dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "index of " + std::to_string(chunks_.size()) + " chunks at dim " +
                    std::to_string(dim_) + " cannot hold " + std::to_string(vectors_.size()) +
                    " floats");
  }
}

EmbeddingIndex build_index(const std::vector<Chunk>& chunks, const Embedder& embedder,
                           std::size_t workers) {
  if (chunks.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot index an empty chunk list");
  const std::string& corpus = chunks.front().corpus_name;
  for (const auto& c : chunks) {
    if (c.corpus_name != corpus) {
      throw Error(ErrorCode::InvalidArgument,
                  "index must hold one corpus, found '" + corpus + "' and '" + c.corpus_name + "'");
    }
  }
  const std::size_t dim = embedder.dim();
  auto rows = parallel_map(chunks.size(), workers, [&](std::size_t i) {
    std::vector<float> v = embedder.embed(chunks[i].text);
    if (v.size() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "embedder returned " + std::to_string(v.size()) +
                                                    " components, expected " + std::to_string(dim));
    }
    for (float x : v) {
      if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "embedding is not finite");
    }
    return v;
  });
  std::vector<float> flat;
  flat.reserve(chunks.size() * dim);
  for (const auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
  return EmbeddingIndex(corpus, dim, chunks, std::move(flat));
}

bool ranks_before(double score_a, const Chunk& a, double score_b, const Chunk& b) noexcept {
  if (score_a != score_b) return score_a > score_b;
  if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
  if (a.chunk_index != b.chunk_index) return a.chunk_index < b.chunk_index;
  return a.corpus_name < b.corpus_name;
}

std::vector<Evidence> search(const EmbeddingIndex& index, std::string_view query, std::size_t k,
                             const Embedder& embedder) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  if (embedder.dim() != index.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "embedder dim " + std::to_string(embedder.dim()) + " vs index dim " +
                    std::to_string(index.dim()));
  }
  const std::vector<float> q = embedder.embed(query);
  if (q.size() != index.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "query embedding has wrong length");
  }

  struct Scored {
    double score;
    std::size_t row;
  };
  std::vector<Scored> scored(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    scored[i] = {cosine_similarity(q, index.vector(i)), i};
  }
  const std::size_t take = std::min(k, scored.size());
  auto before = [&](const Scored& a, const Scored& b) {
    if (ranks_before(a.score, index.chunk(a.row), b.score, index.chunk(b.row))) return true;
    if (ranks_before(b.score, index.chunk(b.row), a.score, index.chunk(a.row))) return false;
    return a.row < b.row;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), before);

  std::vector<Evidence> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({index.chunk(scored[i].row), scored[i].score, std::nullopt});
  }
  return out;
}

EmbeddingReranker::EmbeddingReranker(std::shared_ptr<const Embedder> embedder)
    : embedder_(std::move(embedder)) {
  if (!embedder_) throw Error(ErrorCode::InvalidArgument, "reranker needs an embedder");
}

double EmbeddingReranker::score(std::string_view query, std::string_view passage) const {
  return cosine_similarity(embedder_->embed(query), embedder_->embed(passage));
}

void RetrievalConfig::validate() const {
  if (k_per_source < 1 || k_final < 1) {
    throw Error(ErrorCode::InvalidConfig, "k_per_source and k_final must be at least 1");
  }
}

std::vector<Evidence> retrieve_multi(std::span<const EmbeddingIndex> indices,
                                     std::string_view query, const RetrievalConfig& cfg,
                                     const Embedder& embedder, const Reranker& reranker) {
  cfg.validate();
  if (indices.empty()) throw Error(ErrorCode::InvalidArgument, "no indices to retrieve from");
  std::vector<Evidence> pool;
  for (const auto& index : indices) {
    auto hits = search(index, query, cfg.k_per_source, embedder);
    pool.insert(pool.end(), std::make_move_iterator(hits.begin()),
                std::make_move_iterator(hits.end()));
  }
  for (auto& e : pool) {
    const double s = reranker.score(query, e.chunk.text);
    if (!std::isfinite(s)) throw Error(ErrorCode::InvalidArgument, "reranker score is not finite");
    e.rerank_score = s;
  }
  std::stable_sort(pool.begin(), pool.end(), [](const Evidence& a, const Evidence& b) {
    return ranks_before(*a.rerank_score, a.chunk, *b.rerank_score, b.chunk);
  });
  if (pool.size() > cfg.k_final) pool.resize(cfg.k_final);
  return pool;
}

MultiSourceRetriever::MultiSourceRetriever(std::vector<EmbeddingIndex> indices,
                                           std::shared_ptr<const Embedder> embedder,
                                           std::shared_ptr<const Reranker> reranker,
                                           RetrievalConfig cfg)
    : indices_(std::move(indices)),
      embedder_(std::move(embedder)),
      reranker_(std::move(reranker)),
      cfg_(cfg) {
  cfg_.validate();
  if (!embedder_ || !reranker_) {
    throw Error(ErrorCode::InvalidArgument, "retriever needs an embedder and a reranker");
  }
}

std::vector<Evidence> MultiSourceRetriever::retrieve(std::string_view query) const {
  if (indices_.empty()) return {};
  return retrieve_multi(indices_, query, cfg_, *embedder_, *reranker_);
}

nlohmann::ordered_json evidence_to_json(const Evidence& e) {
  nlohmann::ordered_json j = chunk_to_json(e.chunk);
  j["retrieval_score"] = e.retrieval_score;
  j["rerank_score"] = e.rerank_score ? nlohmann::ordered_json(*e.rerank_score) : nlohmann::ordered_json(nullptr);
  return j;
}

Evidence evidence_from_json(const nlohmann::json& j) {
  Evidence e;
  e.chunk = chunk_from_json(j);
  auto rs = j.find("retrieval_score");
  if (rs == j.end() || !rs->is_number()) {
    throw Error(ErrorCode::MissingField, "evidence needs numeric 'retrieval_score'");
  }
  e.retrieval_score = rs->get<double>();
  if (auto rr = j.find("rerank_score"); rr != j.end() && rr->is_number()) {
    e.rerank_score = rr->get<double>();
  }
  return e;
}

}  // namespace rrag
