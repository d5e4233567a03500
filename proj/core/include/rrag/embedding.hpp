#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace rrag {

/// Text encoder. Implementations must be deterministic, return exactly dim()
/// finite components, and tolerate concurrent embed() calls.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const noexcept = 0;
  virtual std::vector<float> embed(std::string_view text) const = 0;
};

/// Hashed bag-of-words term frequencies.
///
/// Lowercases ASCII, splits on whitespace, hashes each token with FNV-1a 64
/// and adds 1 to bucket `hash % dim`, then L2-normalizes. Empty text maps to
/// the zero vector.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = 256);
  std::size_t dim() const noexcept override { return dim_; }
  std::vector<float> embed(std::string_view text) const override;

 private:
  std::size_t dim_;
};

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Cosine similarity accumulated in double; 0 when either vector is zero.
double cosine_similarity(std::span<const float> a, std::span<const float> b) noexcept;

}  // namespace rrag
