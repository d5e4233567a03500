#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "rrag/error.hpp"
#include "rrag/retriever.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace rrag {
namespace {

std::vector<Chunk> three_chunks() {
  std::vector<Chunk> chunks;
  const char* texts[] = {"insulin resistance in type 2 diabetes", "polycystic ovarian syndrome",
                         "beta cells produce insulin"};
  for (std::uint32_t i = 0; i < 3; ++i) {
    Chunk c;
    c.corpus_name = "textbook";
    c.doc_id = "doc" + std::to_string(i);
    c.text = texts[i];
    c.word_count = static_cast<std::uint32_t>(std::count(c.text.begin(), c.text.end(), ' ') + 1);
    chunks.push_back(c);
  }
  return chunks;
}

/// Reranker independent of the embedder: shared-word fraction of the passage.
class OverlapReranker final : public Reranker {
 public:
  double score(std::string_view query, std::string_view passage) const override {
    return overlap(std::string(query), std::string(passage));
  }
  static double overlap(const std::string& query, const std::string& passage) {
    std::istringstream q(query), p(passage);
    std::set<std::string> qs;
    for (std::string w; q >> w;) qs.insert(w);
    std::size_t hits = 0, total = 0;
    for (std::string w; p >> w; ++total) hits += qs.count(w);
    return total ? static_cast<double>(hits) / total : 0.0;
  }
};

TEST(HashingEmbedder, FnvReferenceValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(HashingEmbedder, BucketsAndNormalization) {
  HashingEmbedder e(256);
  auto v = e.embed("Alpha alpha BETA");
  ASSERT_EQ(v.size(), 256u);
  std::vector<float> expected(256, 0.0f);
  expected[fnv1a64("alpha") % 256] += 2.0f;
  expected[fnv1a64("beta") % 256] += 1.0f;
  const float norm = std::sqrt(5.0f);
  for (auto& x : expected) x /= norm;
  for (std::size_t i = 0; i < 256; ++i) EXPECT_NEAR(v[i], expected[i], 1e-7) << i;
  EXPECT_EQ(e.embed(""), std::vector<float>(256, 0.0f));
  EXPECT_EQ(e.embed("x y"), e.embed("x y"));
}

TEST(BuildIndex, OneEntryPerChunk) {
  HashingEmbedder e;
  auto idx = build_index(three_chunks(), e);
  EXPECT_EQ(idx.size(), 3u);
  EXPECT_EQ(idx.dim(), e.dim());
  EXPECT_EQ(idx.corpus_name(), "textbook");
  EXPECT_EQ(idx.chunk(1).text, "polycystic ovarian syndrome");
}

TEST(BuildIndex, EmptyCorpus) {
  HashingEmbedder e;
  try {
    build_index({}, e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::EmptyCorpus);
  }
}

TEST(BuildIndex, MixedCorporaRejected) {
  auto chunks = three_chunks();
  chunks[2].corpus_name = "pubmed";
  HashingEmbedder e;
  EXPECT_THROW(build_index(chunks, e), Error);
}

TEST(BuildIndex, ParallelBuildMatchesSerial) {
  std::mt19937_64 rng(1);
  auto chunks = testing::random_chunks(rng, "pmc", 200);
  HashingEmbedder e;
  EXPECT_EQ(build_index(chunks, e, 1), build_index(chunks, e, 4));
}

TEST(BuildIndex, SizeMismatch) {
  EXPECT_THROW(EmbeddingIndex("c", 4, three_chunks(), std::vector<float>(11)), Error);
}

TEST(IndexIo, RoundTripIsBitExact) {
  HashingEmbedder e(32);
  auto idx = build_index(three_chunks(), e);
  std::stringstream buf;
  save_index(buf, idx);
  const std::string bytes = buf.str();
  auto loaded = load_index(buf);
  EXPECT_EQ(loaded, idx);
  std::ostringstream again;
  save_index(again, loaded);
  EXPECT_EQ(again.str(), bytes);
  EXPECT_EQ(bytes.substr(0, 8), std::string("SBRIDX1\0", 8));
}

TEST(IndexIo, LayoutIsLittleEndianAndDocumented) {
  HashingEmbedder e(2);
  std::vector<Chunk> chunks = {three_chunks()[0]};
  auto idx = build_index(chunks, e);
  std::ostringstream out;
  save_index(out, idx);
  const std::string b = out.str();
  const std::string& corpus = chunks[0].corpus_name;
  const std::string& doc = chunks[0].doc_id;
  const std::string& text = chunks[0].text;
  EXPECT_EQ(b.size(), 8 + 4 + corpus.size() + 4 + 8 + 4 + doc.size() + 4 + 4 + 4 + text.size() + 2 * 4);
  auto u32_at = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[off + i]);
    return v;
  };
  EXPECT_EQ(u32_at(8), corpus.size());
  EXPECT_EQ(b.substr(12, corpus.size()), corpus);
  EXPECT_EQ(u32_at(12 + corpus.size()), 2u);
  const std::size_t vec_off = b.size() - 8;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::uint32_t bits = u32_at(vec_off + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    EXPECT_EQ(f, idx.vector(0)[i]);
  }
}

TEST(IndexIo, CorruptInputRejected) {
  std::istringstream bad_magic(std::string("NOTANIDX") + std::string(40, '\0'));
  try {
    load_index(bad_magic);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexFormat);
  }
  HashingEmbedder e(8);
  std::ostringstream out;
  save_index(out, build_index(three_chunks(), e));
  std::string truncated = out.str();
  truncated.resize(truncated.size() - 3);
  std::istringstream in(truncated);
  EXPECT_THROW(load_index(in), Error);
}

TEST(IndexIo, DirectoryLoadOrderedByName) {
  auto dir = testing::scratch_dir("index_dir");
  HashingEmbedder e(16);
  auto chunks = three_chunks();
  auto b = chunks;
  for (auto& c : b) c.corpus_name = "b_corpus";
  save_index_file((dir / "zeta.idx").string(), build_index(chunks, e));
  save_index_file((dir / "alpha.idx").string(), build_index(b, e));
  std::ofstream(dir / "notes.txt") << "ignored";
  auto all = load_index_dir(dir.string());
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].corpus_name(), "b_corpus");
  EXPECT_EQ(all[1].corpus_name(), "textbook");
}

TEST(Search, SelfSimilarityRanksFirst) {
  HashingEmbedder e;
  auto idx = build_index(three_chunks(), e);
  auto hits = search(idx, "polycystic ovarian syndrome", 3, e);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].chunk.doc_id, "doc1");
  EXPECT_NEAR(hits[0].retrieval_score, 1.0, 1e-9);
  EXPECT_FALSE(hits[0].rerank_score);
}

TEST(Search, KLargerThanIndex) {
  HashingEmbedder e;
  auto idx = build_index(three_chunks(), e);
  EXPECT_EQ(search(idx, "insulin", 50, e).size(), 3u);
}

TEST(Search, DimensionMismatch) {
  HashingEmbedder e(256), other(64);
  auto idx = build_index(three_chunks(), e);
  try {
    search(idx, "insulin", 1, other);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Search, DuplicateChunksTieBreakByDocThenIndex) {
  HashingEmbedder e;
  std::vector<Chunk> chunks;
  for (auto [doc, ci] : {std::pair{"b", 1u}, {"a", 2u}, {"b", 0u}, {"a", 0u}}) {
    Chunk c;
    c.corpus_name = "c";
    c.doc_id = doc;
    c.chunk_index = ci;
    c.text = "same words here";
    c.word_count = 3;
    chunks.push_back(c);
  }
  auto hits = search(build_index(chunks, e), "same words", 4, e);
  std::vector<std::pair<std::string, std::uint32_t>> order;
  for (const auto& h : hits) order.emplace_back(h.chunk.doc_id, h.chunk.chunk_index);
  EXPECT_EQ(order, (std::vector<std::pair<std::string, std::uint32_t>>{{"a", 0}, {"a", 2}, {"b", 0}, {"b", 1}}));
}

void expect_matches_oracle(const std::vector<Evidence>& got, const std::vector<oracle::Ranked>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].chunk, *want[i].chunk) << "rank " << i;
  }
}

TEST(SearchProperty, EqualsBruteForceOracleAndTruncatesMonotonically) {
  std::mt19937_64 rng(42);
  HashingEmbedder e(64);  // small dim forces hash collisions and ties
  std::uniform_int_distribution<std::size_t> size(1, 300);
  for (int trial = 0; trial < 40; ++trial) {
    auto chunks = testing::random_chunks(rng, "pubmed", size(rng), 40);
    auto idx = build_index(chunks, e);
    const std::string query = testing::random_chunks(rng, "q", 1, 40)[0].text;
    std::vector<Evidence> previous;
    for (std::size_t k = 1; k <= 12; ++k) {
      auto got = search(idx, query, k, e);
      expect_matches_oracle(got, oracle::top_k(idx.chunks(), query, k, e));
      ASSERT_EQ(got.size(), std::min(k, chunks.size()));
      ASSERT_TRUE(std::equal(previous.begin(), previous.end(), got.begin()));
      for (const auto& ev : got) {
        EXPECT_TRUE(std::isfinite(ev.retrieval_score));
      }
      previous = got;
    }
  }
}

TEST(SearchProperty, ConcurrentSearchesAgree) {
  std::mt19937_64 rng(8);
  HashingEmbedder e;
  auto idx = build_index(testing::random_chunks(rng, "pmc", 500), e);
  const auto expected = search(idx, "t1 t2 t3", 10, e);
  std::vector<std::vector<Evidence>> results(8);
  {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < results.size(); ++t) {
      threads.emplace_back([&, t] {
        for (int rep = 0; rep < 20; ++rep) results[t] = search(idx, "t1 t2 t3", 10, e);
      });
    }
  }
  for (const auto& r : results) EXPECT_EQ(r, expected);
}

TEST(RetrieveMulti, PoolIsBoundedByFourK) {
  std::mt19937_64 rng(9);
  HashingEmbedder e;
  std::vector<EmbeddingIndex> indices;
  for (const char* name : {"pubmed", "pmc", "cpg", "textbook"}) {
    indices.push_back(build_index(testing::random_chunks(rng, name, 60), e));
  }
  RetrievalConfig cfg{10, 1000};
  auto got = retrieve_multi(indices, "t1 t5 t9", cfg, e, EmbeddingReranker(std::make_shared<HashingEmbedder>()));
  EXPECT_EQ(got.size(), 40u);
  for (std::size_t i = 1; i < got.size(); ++i) {
    EXPECT_GE(*got[i - 1].rerank_score, *got[i].rerank_score);
  }
}

TEST(RetrieveMulti, IdentityRerankerOnOneSourceEqualsSearch) {
  std::mt19937_64 rng(10);
  auto embedder = std::make_shared<HashingEmbedder>();
  std::vector<EmbeddingIndex> indices{build_index(testing::random_chunks(rng, "cpg", 80), *embedder)};
  RetrievalConfig cfg{10, 5};
  auto multi = retrieve_multi(indices, "t3 t4", cfg, *embedder, EmbeddingReranker(embedder));
  auto single = search(indices[0], "t3 t4", 5, *embedder);
  ASSERT_EQ(multi.size(), single.size());
  for (std::size_t i = 0; i < multi.size(); ++i) {
    EXPECT_EQ(multi[i].chunk, single[i].chunk);
    EXPECT_EQ(*multi[i].rerank_score, multi[i].retrieval_score);
  }
}

TEST(RetrieveMulti, EqualsPooledRerankOracle) {
  std::mt19937_64 rng(12);
  HashingEmbedder e(128);
  OverlapReranker reranker;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EmbeddingIndex> indices;
    std::vector<std::vector<Chunk>> sources;
    for (const char* name : {"pubmed", "pmc", "cpg", "textbook"}) {
      indices.push_back(build_index(testing::random_chunks(rng, name, 1 + rng() % 100, 30), e));
      sources.push_back(indices.back().chunks());
    }
    const std::string query = testing::random_chunks(rng, "q", 1, 30)[0].text;
    for (std::size_t k : {1u, 5u, 10u}) {
      RetrievalConfig cfg{k, k};
      auto got = retrieve_multi(indices, query, cfg, e, reranker);
      expect_matches_oracle(got, oracle::pooled_rerank(sources, query, k, k, e, OverlapReranker::overlap));
    }
  }
}

TEST(RetrieveMulti, ConfigValidation) {
  EXPECT_THROW((RetrievalConfig{0, 10}.validate()), Error);
  EXPECT_THROW((RetrievalConfig{10, 0}.validate()), Error);
  EXPECT_NO_THROW(RetrievalConfig{}.validate());
}

TEST(Evidence, JsonRoundTrip) {
  Evidence ev{three_chunks()[1], 0.5, 0.25};
  EXPECT_EQ(evidence_from_json(nlohmann::json::parse(evidence_to_json(ev).dump())), ev);
  Evidence bare{three_chunks()[0], 0.125, std::nullopt};
  auto j = evidence_to_json(bare);
  EXPECT_TRUE(j.at("rerank_score").is_null());
  EXPECT_EQ(evidence_from_json(nlohmann::json::parse(j.dump())), bare);
}

TEST(MultiSourceRetriever, EmptyIndexListReturnsNothing) {
  auto embedder = std::make_shared<HashingEmbedder>();
  MultiSourceRetriever r({}, embedder, std::make_shared<EmbeddingReranker>(embedder), RetrievalConfig{});
  EXPECT_TRUE(r.retrieve("anything").empty());
}

}  // namespace
}  // namespace rrag
