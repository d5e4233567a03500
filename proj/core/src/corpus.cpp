#include "rrag/corpus.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "index_layout.hpp"
#include "rrag/error.hpp"
#include "rrag/jsonl.hpp"
#include "text_util.hpp"

namespace rrag {

void ChunkConfig::validate() const {
  if (chunk_size == 0) throw Error(ErrorCode::InvalidConfig, "chunk_size must be positive");
  if (overlap >= chunk_size) {
    throw Error(ErrorCode::InvalidConfig, "overlap " + std::to_string(overlap) +
                                              " must be smaller than chunk_size " +
                                              std::to_string(chunk_size));
  }
}

std::vector<Chunk> chunk_document(const SourceDocument& doc, const ChunkConfig& cfg) {
  cfg.validate();
  if (detail::trim(doc.body).empty()) {
    throw Error(ErrorCode::InvalidArgument, "document '" + doc.doc_id + "' has an empty body");
  }
  std::vector<std::string_view> words = detail::split_whitespace(doc.title);
  for (auto w : detail::split_whitespace(doc.body)) words.push_back(w);

  std::vector<Chunk> chunks;
  const std::size_t n = words.size();
  const std::size_t stride = cfg.stride();
  for (std::size_t start = 0; start < n; start += stride) {
    const std::size_t end = std::min(n, start + cfg.chunk_size);
    Chunk c;
    c.corpus_name = doc.corpus_name;
    c.doc_id = doc.doc_id;
    c.chunk_index = static_cast<std::uint32_t>(chunks.size());
    c.word_offset = static_cast<std::uint32_t>(start);
    c.word_count = static_cast<std::uint32_t>(end - start);
    for (std::size_t i = start; i < end; ++i) {
      if (i > start) c.text.push_back(' ');
      c.text += words[i];
    }
    chunks.push_back(std::move(c));
    if (end == n) break;
  }
  return chunks;
}

std::vector<IngestDiagnostic> ingest(std::istream& in, const std::string& corpus_name,
                                     const std::function<void(SourceDocument)>& on_document) {
  std::vector<IngestDiagnostic> diagnostics;
  std::unordered_set<std::string> seen;
  for_each_line(in, [&](std::size_t line, std::string_view text) {
    try {
      const nlohmann::json j = parse_json_record(text, line);
      SourceDocument doc;
      doc.corpus_name = corpus_name;
      doc.doc_id = require_string(j, "doc_id");
      doc.title = optional_string(j, "title");
      doc.body = require_string(j, "body");
      if (detail::trim(doc.body).empty()) {
        diagnostics.push_back({line, "EmptyBody", "document '" + doc.doc_id + "' has an empty body"});
        return;
      }
      if (!seen.insert(doc.doc_id).second) {
        diagnostics.push_back({line, "DuplicateDocId", "doc_id '" + doc.doc_id + "' repeats"});
        return;
      }
      on_document(std::move(doc));
    } catch (const Error& e) {
      diagnostics.push_back({line, std::string(to_string(e.code())), e.message()});
    }
  });
  return diagnostics;
}

IngestResult ingest_file(const std::string& path, const std::string& corpus_name) {
  std::ifstream in = open_input(path);
  IngestResult result;
  result.diagnostics =
      ingest(in, corpus_name, [&](SourceDocument doc) { result.documents.push_back(std::move(doc)); });
  return result;
}

CorpusStats corpus_stats(const std::vector<Chunk>& chunks, std::uint32_t dim) {
  CorpusStats stats;
  std::map<std::string, std::set<std::string>> docs;
  for (const auto& c : chunks) {
    auto& entry = stats[c.corpus_name];
    if (entry.chunk_count == 0) entry.index_bytes = detail::index_header_size(c.corpus_name);
    ++entry.chunk_count;
    entry.index_bytes += detail::index_entry_size(c.doc_id, c.text, dim);
    docs[c.corpus_name].insert(c.doc_id);
  }
  for (auto& [name, entry] : stats) entry.document_count = docs[name].size();
  return stats;
}

nlohmann::ordered_json corpus_stats_to_json(const CorpusStats& stats) {
  nlohmann::ordered_json corpora = nlohmann::ordered_json::object();
  CorpusEntryStats total;
  for (const auto& [name, entry] : stats) {
    corpora[name] = {{"document_count", entry.document_count},
                     {"chunk_count", entry.chunk_count},
                     {"index_bytes", entry.index_bytes}};
    total.document_count += entry.document_count;
    total.chunk_count += entry.chunk_count;
    total.index_bytes += entry.index_bytes;
  }
  nlohmann::ordered_json out;
  out["corpora"] = std::move(corpora);
  out["total"] = {{"document_count", total.document_count},
                  {"chunk_count", total.chunk_count},
                  {"index_bytes", total.index_bytes}};
  return out;
}

nlohmann::ordered_json chunk_to_json(const Chunk& chunk) {
  nlohmann::ordered_json j;
  j["corpus"] = chunk.corpus_name;
  j["doc_id"] = chunk.doc_id;
  j["chunk_index"] = chunk.chunk_index;
  j["word_offset"] = chunk.word_offset;
  j["text"] = chunk.text;
  return j;
}

Chunk chunk_from_json(const nlohmann::json& j) {
  Chunk c;
  c.corpus_name = require_string(j, "corpus");
  c.doc_id = require_string(j, "doc_id");
  auto index = j.find("chunk_index");
  auto offset = j.find("word_offset");
  if (index == j.end() || !index->is_number_unsigned() || offset == j.end() ||
      !offset->is_number_unsigned()) {
    throw Error(ErrorCode::MissingField, "chunk needs unsigned 'chunk_index' and 'word_offset'");
  }
  c.chunk_index = index->get<std::uint32_t>();
  c.word_offset = offset->get<std::uint32_t>();
  c.text = require_string(j, "text");
  c.word_count = static_cast<std::uint32_t>(detail::split_whitespace(c.text).size());
  if (c.word_count == 0) throw Error(ErrorCode::MalformedRecord, "chunk text is empty");
  return c;
}

void write_chunks(std::ostream& out, const std::vector<Chunk>& chunks) {
  for (const auto& c : chunks) write_json_line(out, chunk_to_json(c));
}

std::vector<Chunk> read_chunks(std::istream& in) {
  std::vector<Chunk> chunks;
  for_each_line(in, [&](std::size_t line, std::string_view text) {
    try {
      chunks.push_back(chunk_from_json(parse_json_record(text, line)));
    } catch (const Error& e) {
      throw Error(e.code(), "chunk line " + std::to_string(line) + ": " + e.message());
    }
  });
  return chunks;
}

std::vector<Chunk> read_chunks_file(const std::string& path) {
  std::ifstream in = open_input(path);
  return read_chunks(in);
}

}  // namespace rrag
