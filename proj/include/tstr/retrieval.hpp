#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tstr/corpus.hpp"
#include "tstr/embedding.hpp"
#include "tstr/transform_model.hpp"

namespace tstr {

/// Model digest recorded for indexes over untransformed embeddings.
inline constexpr std::string_view kIdentityModel = "identity";

/// Transformed, re-normalized bank embeddings, one row per kept exemplar.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  RetrievalIndex(std::size_t dim, std::string model_digest, std::string provider_tag);

  void add(std::string id, std::span<const double> unit_row);

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const double> row(std::size_t i) const { return {rows_.data() + i * dim_, dim_}; }
  const std::string& model_digest() const noexcept { return model_digest_; }
  const std::string& provider_tag() const noexcept { return provider_tag_; }
  /// Bank exemplars dropped because their transformed vector was degenerate.
  std::size_t excluded() const noexcept { return excluded_; }
  void set_excluded(std::size_t n) noexcept { excluded_ = n; }
  /// Provenance of the bank rows.
  const std::string& corpus_digest() const noexcept { return corpus_digest_; }
  const std::string& embeddings_digest() const noexcept { return embeddings_digest_; }
  void set_sources(std::string corpus_digest, std::string embeddings_digest) {
    corpus_digest_ = std::move(corpus_digest);
    embeddings_digest_ = std::move(embeddings_digest);
  }

  std::string serialize() const;
  static RetrievalIndex parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static RetrievalIndex load(const std::filesystem::path& path);

 private:
  std::size_t dim_ = 0;
  std::string model_digest_;
  std::string provider_tag_;
  std::vector<std::string> ids_;
  std::vector<double> rows_;
  std::size_t excluded_ = 0;
  std::string corpus_digest_;
  std::string embeddings_digest_;
};

/// Passes every bank embedding through `params` (or keeps it when absent)
/// and re-normalizes. Throws DataError if every row is degenerate.
RetrievalIndex build_index(const CorpusView& bank, const EmbeddingSet& embeds, const TransformParams* params);

struct ScoredExample {
  std::string id;
  double score = 0.0;
  bool operator==(const ScoredExample&) const = default;
};

struct SelectionResult {
  std::string target;
  std::vector<ScoredExample> examples;  ///< non-increasing score, ties by bank position
  std::string model_digest;
};

/// Exact top-k over the index for an already embedded target.
SelectionResult select_examples(const RetrievalIndex& index, std::span<const double> target_embedding,
                                const TransformParams* params, std::size_t k = 8, std::string target_text = {});

/// Embeds `target` through the provider/store, then selects.
SelectionResult select_examples(const RetrievalIndex& index, const std::string& target, EmbeddingProvider& provider,
                                EmbeddingStore& store, const TransformParams* params, std::size_t k = 8);

enum class ExampleOrder { most_similar_last, most_similar_first };

/// Few-shot prompt layout. The example block must start with a non-empty
/// literal, which doubles as the block delimiter when parsing.
struct PromptTemplate {
  std::string preamble;
  std::string example_block;  ///< contains {{utterance}} and {{code}}
  std::string suffix;         ///< contains {{target}}
  ExampleOrder order = ExampleOrder::most_similar_last;

  void validate() const;
  static PromptTemplate default_template();
  /// Template file: text with an `{{#examples}}...{{/examples}}` section
  /// holding the example block; {{target}} after it.
  static PromptTemplate parse(std::string_view text);
  static PromptTemplate load(const std::filesystem::path& path);
};

std::string assemble_prompt(const SelectionResult& result, const Corpus& bank, const std::string& target,
                            const PromptTemplate& tmpl);

struct ParsedExample {
  std::string utterance;
  std::string code;
};

/// Recovers the example blocks of a rendered prompt.
std::vector<ParsedExample> parse_prompt_examples(std::string_view prompt, const PromptTemplate& tmpl);

}  // namespace tstr
