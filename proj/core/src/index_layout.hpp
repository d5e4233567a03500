#pragma once

// On-disk layout of an embedding index (all integers little-endian):
//
//   magic       8 bytes   "SBRIDX1\0"
//   corpus_len  u32       then corpus_len bytes of UTF-8
//   dim         u32
//   count       u64
//   count entries of:
//     doc_id_len  u32     then doc_id bytes
//     chunk_index u32
//     word_offset u32
//     text_len    u32     then text bytes
//     vector      dim x f32 (IEEE-754 binary32)

#include <array>
#include <cstdint>
#include <string_view>

namespace rrag::detail {

inline constexpr std::array<char, 8> k_index_magic{'S', 'B', 'R', 'I', 'D', 'X', '1', '\0'};

inline std::uint64_t index_header_size(std::string_view corpus) noexcept {
  return k_index_magic.size() + 4 + corpus.size() + 4 + 8;
}

inline std::uint64_t index_entry_size(std::string_view doc_id, std::string_view text,
                                      std::uint32_t dim) noexcept {
  return 4 + doc_id.size() + 4 + 4 + 4 + text.size() + std::uint64_t{4} * dim;
}

}  // namespace rrag::detail
