#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tstr/corpus.hpp"

namespace tstr {

// ---------------------------------------------------------------------------
// Edit distance

/// Unit-cost Levenshtein distance over arbitrary sequences, two-row DP with
/// the shorter sequence on the inner loop.
template <typename T>
std::size_t levenshtein(std::span<const T> a, std::span<const T> b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// 1 - L(a, b) / max(|a|, |b|); 1.0 when both are empty.
template <typename T>
double normalized_edit_similarity(std::span<const T> a, std::span<const T> b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

/// Decodes UTF-8 into code points; invalid bytes map to U+FFFD.
std::u32string decode_utf8(std::string_view s);

/// Character-level (code point) normalized edit similarity.
double normalized_edit_similarity(std::string_view a, std::string_view b);

// ---------------------------------------------------------------------------
// Masking

enum class UnterminatedPolicy { mask_to_end_of_line, fail };

/// A configured identifier class, e.g. bracketed column references.
struct IdentifierClass {
  std::string name;
  std::string pattern;  ///< ECMAScript regex, matched anchored at the scan position
  std::string token;    ///< replacement
};

/// Rules for command-template extraction (shell-like code).
struct TemplateRules {
  std::vector<std::string> separators{"|", ";", "&&", "||"};
  std::string flag_prefix = "-";
  std::string operand_token = "<ARG>";
};

struct MaskingConfig {
  std::string name = "generic";
  std::string string_delimiters = "\"";
  bool backslash_escapes = true;
  bool doubled_delimiter_escapes = false;
  bool mask_numbers = true;
  std::string string_token = "<STR>";
  std::string number_token = "<NUM>";
  std::vector<IdentifierClass> identifier_classes;
  UnterminatedPolicy unterminated = UnterminatedPolicy::mask_to_end_of_line;
  TemplateRules template_rules;

  /// Throws DataError on empty or colliding mask tokens or bad patterns.
  void validate() const;
  /// Canonical digest, stored alongside similarity matrices.
  std::string digest() const;
};

/// Presets: "m" (strings, numbers, [Column] and #"..." identifiers),
/// "generic" (strings and numbers), "bash" (template rules).
MaskingConfig masking_preset(std::string_view name);

/// Compiled masker; reuse it when masking many snippets.
class Masker {
 public:
  explicit Masker(MaskingConfig cfg);

  /// Replaces string/number literals and configured identifiers with their
  /// class tokens. Already-masked tokens pass through untouched.
  std::string sketch(std::string_view code) const;

  const MaskingConfig& config() const noexcept { return cfg_; }

 private:
  MaskingConfig cfg_;
  std::vector<std::regex> identifier_patterns_;
  std::vector<std::string> passthrough_tokens_;
};

std::string sketch(std::string_view code, const MaskingConfig& cfg);
double sketch_match(std::string_view c1, std::string_view c2, const MaskingConfig& cfg);

/// Command-template tokens: segment heads, flags and separators literal,
/// every other token replaced by the operand token.
std::vector<std::string> command_template(std::string_view code, const TemplateRules& rules = {});
double template_match(std::string_view c1, std::string_view c2, const TemplateRules& rules = {});

// ---------------------------------------------------------------------------
// Similarity matrix

enum class Metric { edit, sketch, template_match };

std::string_view to_string(Metric m) noexcept;
std::optional<Metric> parse_metric(std::string_view s) noexcept;

/// A snippet preprocessed for one metric, so the O(n^2) pair loop only runs
/// the edit distance.
struct PreparedCode {
  std::u32string chars;             ///< edit / sketch metrics
  std::vector<std::string> tokens;  ///< template metric
};

class CodeSimilarity {
 public:
  CodeSimilarity(Metric metric, MaskingConfig cfg);

  Metric metric() const noexcept { return metric_; }
  const MaskingConfig& masking() const noexcept { return masker_.config(); }

  PreparedCode prepare(std::string_view code) const;
  double score(const PreparedCode& a, const PreparedCode& b) const;
  double operator()(std::string_view c1, std::string_view c2) const {
    return score(prepare(c1), prepare(c2));
  }

 private:
  Metric metric_;
  Masker masker_;
};

/// Dense symmetric S_c over an ordered id list, stored as the strict upper
/// triangle in float32 (the persisted precision).
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  SimilarityMatrix(std::vector<std::string> ids, Metric metric, std::string corpus_digest,
                   std::string masking_digest);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  Metric metric() const noexcept { return metric_; }
  const std::string& corpus_digest() const noexcept { return corpus_digest_; }
  const std::string& masking_digest() const noexcept { return masking_digest_; }

  std::optional<std::size_t> index_of(std::string_view id) const;
  std::size_t require_index(std::string_view id) const;

  /// Entry (i, j); the diagonal is 1.
  double at(std::size_t i, std::size_t j) const noexcept {
    if (i == j) return 1.0;
    if (i > j) std::swap(i, j);
    return static_cast<double>(upper_[offset(i, j)]);
  }
  double at(std::string_view a, std::string_view b) const { return at(require_index(a), require_index(b)); }
  void set(std::size_t i, std::size_t j, double v);

  /// Digest over header and values; derived artifacts record it.
  std::string digest() const;

  std::string serialize() const;
  static SimilarityMatrix parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static SimilarityMatrix load(const std::filesystem::path& path);

  bool operator==(const SimilarityMatrix& o) const noexcept {
    return ids_ == o.ids_ && metric_ == o.metric_ && upper_ == o.upper_ &&
           corpus_digest_ == o.corpus_digest_ && masking_digest_ == o.masking_digest_;
  }

 private:
  std::size_t offset(std::size_t i, std::size_t j) const noexcept {
    // Row i of the strict upper triangle starts after rows 0..i-1.
    const std::size_t n = ids_.size();
    return i * (2 * n - i - 1) / 2 + (j - i - 1);
  }
  void build_index();

  std::vector<std::string> ids_;
  Metric metric_ = Metric::sketch;
  std::string corpus_digest_;
  std::string masking_digest_;
  std::vector<float> upper_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Full matrix over the view. `threads` = 0 picks hardware concurrency;
/// the result does not depend on the thread count.
SimilarityMatrix similarity_matrix(const CorpusView& view, Metric metric, const MaskingConfig& cfg,
                                   unsigned threads = 0);

}  // namespace tstr
