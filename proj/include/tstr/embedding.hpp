#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tstr/corpus.hpp"

namespace tstr {

/// Unit-norm embedding of one text.
struct EmbeddingVector {
  std::vector<double> values;
  std::string provider_tag;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Scales `values` to unit L2 norm. Returns false (leaving values
/// untouched) when the norm is zero or not finite.
bool normalize_in_place(std::span<double> values) noexcept;

/// Clamped dot product of unit vectors. Throws ShapeError on mismatch.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine(std::span<const double> a, std::span<const double> b);

/// Deterministic offline embedder: signed-hash bag of lowercased character
/// trigrams, L2-normalized. Texts with no trigram (or whose signed counts
/// cancel) map to e_0. Requires dim >= 16.
EmbeddingVector fallback_embed(std::string_view text, std::size_t dim);

/// Bucket and sign for one trigram, as used by fallback_embed.
struct TrigramSlot {
  std::size_t bucket;
  double sign;
};
TrigramSlot trigram_slot(std::u32string_view trigram, std::size_t dim) noexcept;

/// Source of raw (not necessarily normalized) embeddings.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Provider + model identifier, part of every cache key.
  virtual std::string tag() const = 0;
  /// One vector per input, index-aligned.
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

class FallbackProvider final : public EmbeddingProvider {
 public:
  explicit FallbackProvider(std::size_t dim = 256);
  std::string tag() const override;
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::milliseconds max_backoff{10'000};
  /// Upper bound for a server-provided Retry-After.
  std::chrono::milliseconds max_retry_after{60'000};
};

struct HttpProviderConfig {
  std::string url;     ///< full endpoint URL, e.g. https://host/v1/embeddings
  std::string model;   ///< sent as "model" and used in the tag
  std::string api_key; ///< bearer token; empty sends no Authorization header
  RetryPolicy retry;
  std::chrono::seconds timeout{60};

  /// Reads EMBED_API_URL / EMBED_API_KEY.
  static HttpProviderConfig from_environment(std::string model);
};

/// JSON-over-HTTP provider:
///   POST {"model": tag, "input": [...]}
///   -> {"data": [{"index": i, "embedding": [...]}, ...]}
/// Transport errors and 5xx are retried with exponential backoff; 429
/// honours Retry-After. Wrong counts or dimensions raise IntegrityError.
class HttpProvider final : public EmbeddingProvider {
 public:
  explicit HttpProvider(HttpProviderConfig cfg);
  std::string tag() const override;
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;
  /// Number of HTTP requests issued (including retries).
  std::size_t requests() const noexcept { return requests_.load(); }

 private:
  HttpProviderConfig cfg_;
  std::string scheme_host_port_;
  std::string path_;
  std::atomic<std::size_t> requests_{0};
};

/// Persistent cache keyed by digest(provider_tag, text). Lookups are exact.
/// Concurrent readers, serialized writers; writes append to the backing
/// file when one is attached.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::filesystem::path backing_file);

  static std::string key(std::string_view provider_tag, std::string_view text);

  std::optional<EmbeddingVector> get(std::string_view provider_tag, std::string_view text) const;
  /// Inserts in order; existing keys are kept. Appends new records to the file.
  void put(std::span<const std::pair<std::string, EmbeddingVector>> entries);

  std::size_t size() const;
  const std::filesystem::path& backing_file() const noexcept { return path_; }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> entries_;
  std::filesystem::path path_;
};

struct EmbedOptions {
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 4;
};

/// Embeds `texts` through the store: cache hits are served locally, misses
/// are deduplicated, batched and sent to the provider (up to max_in_flight
/// batches concurrently), normalized and written through in input order.
std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, EmbeddingProvider& provider,
                                         EmbeddingStore& store, const EmbedOptions& opts = {});

/// Unit vectors for every exemplar of a corpus (the embed stage artifact).
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(std::string provider_tag, std::size_t dim, std::string corpus_digest);

  void add(std::string id, std::span<const double> unit_vector);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& provider_tag() const noexcept { return provider_tag_; }
  const std::string& corpus_digest() const noexcept { return corpus_digest_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  bool contains(std::string_view id) const { return index_.contains(std::string(id)); }
  /// Throws DataError for unknown ids.
  std::span<const double> at(std::string_view id) const;
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  std::string serialize() const;
  static EmbeddingSet parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static EmbeddingSet load(const std::filesystem::path& path);
  std::string digest() const;

 private:
  std::string provider_tag_;
  std::size_t dim_ = 0;
  std::string corpus_digest_;
  std::vector<std::string> ids_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Embeds every utterance of `corpus`.
EmbeddingSet embed_corpus(const Corpus& corpus, EmbeddingProvider& provider, EmbeddingStore& store,
                          const EmbedOptions& opts = {});

}  // namespace tstr
