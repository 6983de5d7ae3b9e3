#include <algorithm>
#include <cmath>

#include "tstr/code_similarity.hpp"
#include "tstr/digest.hpp"
#include "tstr/embedding.hpp"
#include "tstr/error.hpp"
#include "tstr/kernels.hpp"

namespace tstr {

bool normalize_in_place(std::span<double> values) noexcept {
  const double norm = std::sqrt(kernels::dot(values, values));
  if (!(norm > 0.0) || !std::isfinite(norm)) return false;
  for (double& v : values) v /= norm;
  return true;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  return std::clamp(kernels::dot(a, b), -1.0, 1.0);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a.values, b.values); }

TrigramSlot trigram_slot(std::u32string_view trigram, std::size_t dim) noexcept {
  std::string bytes;
  for (char32_t c : trigram) {
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<char>((c >> (8 * k)) & 0xff));
  }
  const std::uint64_t h = splitmix64(fnv1a64(bytes));
  return {static_cast<std::size_t>(h % dim), (h >> 63) != 0 ? -1.0 : 1.0};
}

EmbeddingVector fallback_embed(std::string_view text, std::size_t dim) {
  if (dim < 16) throw UsageError("fallback embedder needs dim >= 16");
  std::u32string chars = decode_utf8(text);
  for (char32_t& c : chars) {
    if (c >= U'A' && c <= U'Z') c = c - U'A' + U'a';
  }
  EmbeddingVector out;
  out.provider_tag = "fallback/trigram-" + std::to_string(dim);
  out.values.assign(dim, 0.0);
  for (std::size_t i = 0; i + 3 <= chars.size(); ++i) {
    const TrigramSlot slot = trigram_slot(std::u32string_view(chars).substr(i, 3), dim);
    out.values[slot.bucket] += slot.sign;
  }
  if (!normalize_in_place(out.values)) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    out.values[0] = 1.0;
  }
  return out;
}

FallbackProvider::FallbackProvider(std::size_t dim) : dim_(dim) {
  if (dim < 16) throw UsageError("fallback embedder needs dim >= 16");
}

std::string FallbackProvider::tag() const { return "fallback/trigram-" + std::to_string(dim_); }

std::vector<std::vector<double>> FallbackProvider::embed(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const std::string& t : texts) out.push_back(fallback_embed(t, dim_).values);
  return out;
}

}  // namespace tstr
