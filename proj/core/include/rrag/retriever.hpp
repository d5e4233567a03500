#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rrag/corpus.hpp"
#include "rrag/embedding.hpp"

namespace rrag {

/// Immutable dense index over the chunks of one corpus.
class EmbeddingIndex {
 public:
  /// Takes ownership of row-major `vectors` (chunks.size() x dim).
  /// Throws Error(DimensionMismatch) when the sizes disagree.
  EmbeddingIndex(std::string corpus_name, std::size_t dim, std::vector<Chunk> chunks,
                 std::vector<float> vectors);

  const std::string& corpus_name() const noexcept { return corpus_name_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return chunks_.size(); }
  const Chunk& chunk(std::size_t i) const { return chunks_.at(i); }
  const std::vector<Chunk>& chunks() const noexcept { return chunks_; }
  std::span<const float> vector(std::size_t i) const {
    return std::span<const float>(vectors_).subspan(i * dim_, dim_);
  }

  friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;

 private:
  std::string corpus_name_;
  std::size_t dim_;
  std::vector<Chunk> chunks_;
  std::vector<float> vectors_;
};

/// One embedding per chunk, in input order. Chunks must share one corpus.
/// Errors: EmptyCorpus, InvalidArgument (mixed corpora), DimensionMismatch.
EmbeddingIndex build_index(const std::vector<Chunk>& chunks, const Embedder& embedder,
                           std::size_t workers = 1);

void save_index(std::ostream& out, const EmbeddingIndex& index);
EmbeddingIndex load_index(std::istream& in);
void save_index_file(const std::string& path, const EmbeddingIndex& index);
EmbeddingIndex load_index_file(const std::string& path);
/// Every `*.idx` file in `dir`, ordered by file name.
std::vector<EmbeddingIndex> load_index_dir(const std::string& dir);

struct Evidence {
  Chunk chunk;
  double retrieval_score = 0.0;
  std::optional<double> rerank_score;

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

nlohmann::ordered_json evidence_to_json(const Evidence& e);
Evidence evidence_from_json(const nlohmann::json& j);

/// Total order used everywhere results are ranked: score descending, then
/// doc_id, chunk_index, and corpus name ascending.
bool ranks_before(double score_a, const Chunk& a, double score_b, const Chunk& b) noexcept;

/// The k chunks most cosine-similar to embed(query), best first.
std::vector<Evidence> search(const EmbeddingIndex& index, std::string_view query, std::size_t k,
                             const Embedder& embedder);

/// Second-stage scorer. Deterministic, finite, safe to call concurrently.
class Reranker {
 public:
  virtual ~Reranker() = default;
  virtual double score(std::string_view query, std::string_view passage) const = 0;
};

/// Cosine of embeddings from `embedder`. With the index's own embedder this
/// reproduces the first-stage retrieval score.
class EmbeddingReranker final : public Reranker {
 public:
  explicit EmbeddingReranker(std::shared_ptr<const Embedder> embedder);
  double score(std::string_view query, std::string_view passage) const override;

 private:
  std::shared_ptr<const Embedder> embedder_;
};

struct RetrievalConfig {
  std::size_t k_per_source = 10;
  std::size_t k_final = 10;
  void validate() const;
};

/// Pools k_per_source hits from every index, reranks the pool, and keeps the
/// best k_final by rerank score.
std::vector<Evidence> retrieve_multi(std::span<const EmbeddingIndex> indices,
                                     std::string_view query, const RetrievalConfig& cfg,
                                     const Embedder& embedder, const Reranker& reranker);

/// Evidence provider seen by inference and annotation.
class EvidenceSource {
 public:
  virtual ~EvidenceSource() = default;
  virtual std::vector<Evidence> retrieve(std::string_view query) const = 0;
};

class MultiSourceRetriever final : public EvidenceSource {
 public:
  MultiSourceRetriever(std::vector<EmbeddingIndex> indices, std::shared_ptr<const Embedder> embedder,
                       std::shared_ptr<const Reranker> reranker, RetrievalConfig cfg);

  std::vector<Evidence> retrieve(std::string_view query) const override;
  const std::vector<EmbeddingIndex>& indices() const noexcept { return indices_; }

 private:
  std::vector<EmbeddingIndex> indices_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<const Reranker> reranker_;
  RetrievalConfig cfg_;
};

}  // namespace rrag
