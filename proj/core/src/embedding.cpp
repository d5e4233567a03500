#include "rrag/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "rrag/error.hpp"
#include "text_util.hpp"

namespace rrag {

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::InvalidConfig, "embedding dimension must be positive");
}

std::vector<float> HashingEmbedder::embed(std::string_view text) const {
  std::vector<double> counts(dim_, 0.0);
  const std::string lowered = detail::ascii_lower(text);
  for (auto word : detail::split_whitespace(lowered)) counts[fnv1a64(word) % dim_] += 1.0;
  double norm = 0.0;
  for (double c : counts) norm += c * c;
  norm = std::sqrt(norm);
  std::vector<float> out(dim_, 0.0f);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(counts[i] / norm);
  }
  return out;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) noexcept {
  const std::size_t n = std::min(a.size(), b.size());
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a[i];
    const double y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace rrag
