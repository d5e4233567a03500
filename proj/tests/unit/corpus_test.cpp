#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "rrag/corpus.hpp"
#include "rrag/error.hpp"
#include "rrag/retriever.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace rrag {
namespace {

SourceDocument numbered_document(std::size_t words) {
  std::string body;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) body += ' ';
    body += "w" + std::to_string(i);
  }
  return {"pubmed", "doc", "", body};
}

std::vector<std::string> split(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

using oracle::layout_of;

TEST(ChunkDocument, ThreeHundredWords) {
  auto l = layout_of(chunk_document(numbered_document(300)));
  EXPECT_EQ(l.offsets, (std::vector<std::uint32_t>{0, 96, 192}));
  EXPECT_EQ(l.counts, (std::vector<std::uint32_t>{128, 128, 108}));
}

TEST(ChunkDocument, ExactFit) {
  auto chunks = chunk_document(numbered_document(128));
  ASSERT_EQ(chunks.size(), 1u);
  EXPECT_EQ(chunks[0].word_count, 128u);
}

TEST(ChunkDocument, OneWordOverExactFit) {
  auto l = layout_of(chunk_document(numbered_document(129)));
  EXPECT_EQ(l.offsets, (std::vector<std::uint32_t>{0, 96}));
  EXPECT_EQ(l.counts, (std::vector<std::uint32_t>{128, 33}));
}

TEST(ChunkDocument, ShortDocumentIsOneChunk) {
  auto chunks = chunk_document(numbered_document(5));
  ASSERT_EQ(chunks.size(), 1u);
  EXPECT_EQ(chunks[0].text, "w0 w1 w2 w3 w4");
}

TEST(ChunkDocument, TitleIsPrependedAndSpacingNormalized) {
  SourceDocument doc{"cpg", "g1", "Guideline  Title", "  first\tsecond\n\nthird "};
  auto chunks = chunk_document(doc);
  ASSERT_EQ(chunks.size(), 1u);
  EXPECT_EQ(chunks[0].text, "Guideline Title first second third");
  EXPECT_EQ(chunks[0].word_count, 5u);
  EXPECT_EQ(chunks[0].corpus_name, "cpg");
  EXPECT_EQ(chunks[0].doc_id, "g1");
}

TEST(ChunkDocument, InvalidConfig) {
  auto doc = numbered_document(10);
  for (ChunkConfig cfg : {ChunkConfig{0, 0}, ChunkConfig{32, 32}, ChunkConfig{10, 20}}) {
    try {
      chunk_document(doc, cfg);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    }
  }
  EXPECT_NO_THROW(chunk_document(doc, ChunkConfig{1, 0}));
}

TEST(ChunkDocument, EmptyBodyRejected) {
  EXPECT_THROW(chunk_document({"c", "d", "title", "   "}), Error);
}

TEST(ChunkProperty, CoverageOverlapAndLayout) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> length(1, 2000);
  std::uniform_int_distribution<std::uint32_t> size_pick(1, 200);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = length(rng);
    ChunkConfig cfg;
    if (trial % 3 == 0) {
      cfg.chunk_size = size_pick(rng);
      cfg.overlap = std::uniform_int_distribution<std::uint32_t>(0, cfg.chunk_size - 1)(rng);
    }
    auto doc = testing::random_document(rng, "pmc", "d", n);
    const auto words = split(doc.body);
    const auto chunks = chunk_document(doc, cfg);

    auto want = oracle::chunk_layout(n, cfg.chunk_size, cfg.overlap);
    auto got = layout_of(chunks);
    ASSERT_EQ(got.offsets, want.offsets);
    ASSERT_EQ(got.counts, want.counts);

    std::vector<std::string> rebuilt;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const auto cw = split(chunks[i].text);
      ASSERT_EQ(cw.size(), chunks[i].word_count);
      ASSERT_GE(chunks[i].word_count, 1u);
      ASSERT_LE(chunks[i].word_count, cfg.chunk_size);
      ASSERT_EQ(chunks[i].chunk_index, i);
      ASSERT_EQ(chunks[i].word_offset, i * cfg.stride());
      const bool last = i + 1 == chunks.size();
      const std::size_t take = last ? cw.size() : cfg.stride();
      rebuilt.insert(rebuilt.end(), cw.begin(), cw.begin() + static_cast<std::ptrdiff_t>(take));
      if (!last && chunks[i].word_count == cfg.chunk_size && cfg.overlap > 0) {
        const auto next = split(chunks[i + 1].text);
        ASSERT_GE(next.size(), cfg.overlap);
        ASSERT_TRUE(std::equal(cw.end() - cfg.overlap, cw.end(), next.begin()));
      }
      if (last && i > 0) {
        // The final window always adds at least one word.
        ASSERT_GT(chunks[i].word_offset + chunks[i].word_count,
                  chunks[i - 1].word_offset + chunks[i - 1].word_count);
      }
    }
    ASSERT_EQ(rebuilt, words);
  }
}

TEST(ChunkProperty, Deterministic) {
  std::mt19937_64 rng(11);
  auto doc = testing::random_document(rng, "textbook", "t", 777);
  EXPECT_EQ(chunk_document(doc), chunk_document(doc));
}

TEST(Ingest, ValidFileKeepsOrder) {
  std::istringstream in(R"({"doc_id":"a","title":"T","body":"one two"}
{"doc_id":"b","body":"three"}
)");
  std::vector<SourceDocument> docs;
  auto diags = ingest(in, "pubmed", [&](SourceDocument d) { docs.push_back(std::move(d)); });
  EXPECT_TRUE(diags.empty());
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].doc_id, "a");
  EXPECT_EQ(docs[0].title, "T");
  EXPECT_EQ(docs[1].doc_id, "b");
  EXPECT_EQ(docs[1].corpus_name, "pubmed");
}

TEST(Ingest, EmptyBodySkipped) {
  std::istringstream in(R"({"doc_id":"a","body":"  "}
{"doc_id":"b","body":"x"}
)");
  std::vector<SourceDocument> docs;
  auto diags = ingest(in, "c", [&](SourceDocument d) { docs.push_back(std::move(d)); });
  ASSERT_EQ(docs.size(), 1u);
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].line, 1u);
}

TEST(Ingest, OneMalformedLineAmongThree) {
  std::istringstream in(R"({"doc_id":"a","body":"x"}
{"doc_id": "b", "body":
{"doc_id":"c","body":"z"}
)");
  std::vector<SourceDocument> docs;
  auto diags = ingest(in, "c", [&](SourceDocument d) { docs.push_back(std::move(d)); });
  ASSERT_EQ(docs.size(), 2u);
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].line, 2u);
  EXPECT_EQ(diags[0].code, "MalformedRecord");
}

TEST(Ingest, MissingFieldReported) {
  std::istringstream in(R"({"title":"no id","body":"x"}
{"doc_id":"b"}
)");
  std::vector<SourceDocument> docs;
  auto diags = ingest(in, "c", [&](SourceDocument d) { docs.push_back(std::move(d)); });
  EXPECT_TRUE(docs.empty());
  ASSERT_EQ(diags.size(), 2u);
  EXPECT_EQ(diags[0].code, "MissingField");
  EXPECT_EQ(diags[1].code, "MissingField");
}

TEST(CorpusStats, OneDocumentOfThreeHundredWords) {
  auto chunks = chunk_document(numbered_document(300));
  auto stats = corpus_stats(chunks);
  ASSERT_EQ(stats.size(), 1u);
  EXPECT_EQ(stats.at("pubmed").document_count, 1u);
  EXPECT_EQ(stats.at("pubmed").chunk_count, 3u);
}

TEST(CorpusStats, EmptyCorpus) {
  auto stats = corpus_stats({});
  EXPECT_TRUE(stats.empty());
  EXPECT_EQ(corpus_stats_to_json(stats).dump(),
            R"({"corpora":{},"total":{"document_count":0,"chunk_count":0,"index_bytes":0}})");
}

TEST(CorpusStats, IndexBytesMatchesWrittenFile) {
  std::mt19937_64 rng(5);
  std::vector<Chunk> chunks;
  for (int d = 0; d < 4; ++d) {
    auto doc = testing::random_document(rng, "pmc", "doc" + std::to_string(d), 150 + d * 70);
    for (auto& c : chunk_document(doc)) chunks.push_back(std::move(c));
  }
  auto stats = corpus_stats(chunks, 64);
  HashingEmbedder embedder(64);
  std::ostringstream out;
  save_index(out, build_index(chunks, embedder));
  EXPECT_EQ(stats.at("pmc").index_bytes, out.str().size());
  EXPECT_EQ(stats.at("pmc").document_count, 4u);
  EXPECT_GE(stats.at("pmc").chunk_count, stats.at("pmc").document_count);
}

TEST(ChunkJsonl, RoundTrip) {
  auto chunks = chunk_document(numbered_document(300));
  std::ostringstream out;
  write_chunks(out, chunks);
  std::istringstream in(out.str());
  EXPECT_EQ(read_chunks(in), chunks);
  auto j = chunk_to_json(chunks[1]);
  EXPECT_EQ(j.dump().substr(0, 30), R"({"corpus":"pubmed","doc_id":"d)");
  EXPECT_EQ(j.at("word_offset"), 96);
}

}  // namespace
}  // namespace rrag
