#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <limits>

#include "index_layout.hpp"
#include "rrag/error.hpp"
#include "rrag/jsonl.hpp"
#include "rrag/retriever.hpp"
#include "text_util.hpp"

namespace rrag {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_string(std::ostream& out, std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::InvalidArgument, "string too long for index record");
  }
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw Error(ErrorCode::IndexFormat, "index file truncated");
    }
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }

  std::string string() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    if (n > 0) bytes(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_index(std::ostream& out, const EmbeddingIndex& index) {
  out.write(detail::k_index_magic.data(), detail::k_index_magic.size());
  put_string(out, index.corpus_name());
  put_u32(out, static_cast<std::uint32_t>(index.dim()));
  put_u64(out, index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Chunk& c = index.chunk(i);
    put_string(out, c.doc_id);
    put_u32(out, c.chunk_index);
    put_u32(out, c.word_offset);
    put_string(out, c.text);
    for (float x : index.vector(i)) put_u32(out, std::bit_cast<std::uint32_t>(x));
  }
  if (!out) throw Error(ErrorCode::Io, "failed writing index");
}

EmbeddingIndex load_index(std::istream& in) {
  Reader r(in);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, detail::k_index_magic.data(), sizeof magic) != 0) {
    throw Error(ErrorCode::IndexFormat, "bad magic, not an SBRIDX1 index");
  }
  std::string corpus = r.string();
  const std::uint32_t dim = r.u32();
  const std::uint64_t count = r.u64();
  if (dim == 0) throw Error(ErrorCode::IndexFormat, "index dimension is zero");
  std::vector<Chunk> chunks;
  std::vector<float> vectors;
  for (std::uint64_t i = 0; i < count; ++i) {
    Chunk c;
    c.corpus_name = corpus;
    c.doc_id = r.string();
    c.chunk_index = r.u32();
    c.word_offset = r.u32();
    c.text = r.string();
    c.word_count = static_cast<std::uint32_t>(detail::split_whitespace(c.text).size());
    for (std::uint32_t d = 0; d < dim; ++d) vectors.push_back(std::bit_cast<float>(r.u32()));
    chunks.push_back(std::move(c));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::IndexFormat, "trailing bytes after last index entry");
  }
  return EmbeddingIndex(std::move(corpus), dim, std::move(chunks), std::move(vectors));
}

void save_index_file(const std::string& path, const EmbeddingIndex& index) {
  std::ofstream out = open_output(path);
  save_index(out, index);
}

EmbeddingIndex load_index_file(const std::string& path) {
  std::ifstream in = open_input(path);
  try {
    return load_index(in);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.message());
  }
}

std::vector<EmbeddingIndex> load_index_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::Io, "'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".idx") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<EmbeddingIndex> out;
  for (const auto& f : files) out.push_back(load_index_file(f.string()));
  return out;
}

}  // namespace rrag
