#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rrag {

struct SourceDocument {
  std::string corpus_name;
  std::string doc_id;
  std::string title;
  std::string body;
};

struct Chunk {
  std::string corpus_name;
  std::string doc_id;
  std::uint32_t chunk_index = 0;
  std::uint32_t word_offset = 0;
  std::string text;          // words joined by single spaces
  std::uint32_t word_count = 0;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct ChunkConfig {
  std::uint32_t chunk_size = 128;
  std::uint32_t overlap = 32;

  std::uint32_t stride() const noexcept { return chunk_size - overlap; }
  /// Throws Error(InvalidConfig) unless 0 <= overlap < chunk_size.
  void validate() const;
};

/// Sliding word windows over `title + " " + body`.
///
/// Windows start at 0, stride, 2*stride, ... and hold min(chunk_size,
/// remaining) words. Emission stops once a window reaches the last word, so
/// the final chunk always contributes at least one new word.
std::vector<Chunk> chunk_document(const SourceDocument& doc, const ChunkConfig& cfg = {});

struct IngestDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string code;      // "MalformedRecord", "MissingField", ...
  std::string message;
};

/// Reads `{"doc_id", "title"?, "body"}` JSONL. Bad lines are skipped and
/// reported; `on_document` sees documents in file order.
std::vector<IngestDiagnostic> ingest(std::istream& in, const std::string& corpus_name,
                                     const std::function<void(SourceDocument)>& on_document);

struct IngestResult {
  std::vector<SourceDocument> documents;
  std::vector<IngestDiagnostic> diagnostics;
};

IngestResult ingest_file(const std::string& path, const std::string& corpus_name);

struct CorpusEntryStats {
  std::uint64_t document_count = 0;
  std::uint64_t chunk_count = 0;
  std::uint64_t index_bytes = 0;  // on-disk size of the index for this corpus
  friend bool operator==(const CorpusEntryStats&, const CorpusEntryStats&) = default;
};

using CorpusStats = std::map<std::string, CorpusEntryStats>;

/// Exact per-corpus counts. `index_bytes` is the size of the index file that
/// build_index + save_index would write for embeddings of dimension `dim`.
CorpusStats corpus_stats(const std::vector<Chunk>& chunks, std::uint32_t dim = 256);

nlohmann::ordered_json corpus_stats_to_json(const CorpusStats& stats);

// Chunk JSONL: {"corpus", "doc_id", "chunk_index", "word_offset", "text"}.
nlohmann::ordered_json chunk_to_json(const Chunk& chunk);
Chunk chunk_from_json(const nlohmann::json& j);
void write_chunks(std::ostream& out, const std::vector<Chunk>& chunks);
std::vector<Chunk> read_chunks(std::istream& in);
std::vector<Chunk> read_chunks_file(const std::string& path);

}  // namespace rrag
