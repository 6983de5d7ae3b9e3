#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tstr {

enum class Split { train, test };

std::string_view to_string(Split s) noexcept;
std::optional<Split> parse_split(std::string_view s) noexcept;

/// One (utterance, code) pair; the unit of retrieval.
struct Exemplar {
  std::string id;
  std::string utterance;
  std::string code;
  Split split = Split::train;

  bool operator==(const Exemplar&) const = default;
};

class CorpusView;

/// An immutable, validated exemplar bank in file order.
class Corpus {
 public:
  Corpus() = default;
  /// Validates ids and texts. Throws DuplicateIdError / DataError.
  explicit Corpus(std::vector<Exemplar> exemplars, std::filesystem::path source = {});

  std::size_t size() const noexcept { return exemplars_.size(); }
  bool empty() const noexcept { return exemplars_.empty(); }
  const Exemplar& operator[](std::size_t i) const { return exemplars_[i]; }
  const std::vector<Exemplar>& exemplars() const noexcept { return exemplars_; }
  auto begin() const noexcept { return exemplars_.begin(); }
  auto end() const noexcept { return exemplars_.end(); }

  /// Position of `id`, if present.
  std::optional<std::size_t> find(std::string_view id) const;
  const Exemplar& at(std::string_view id) const;

  const std::filesystem::path& source() const noexcept { return source_; }
  /// SHA-256 over the canonical serialization of all records.
  const std::string& digest() const noexcept { return digest_; }

  CorpusView all() const;

 private:
  std::vector<Exemplar> exemplars_;
  std::unordered_map<std::string, std::size_t> index_;
  std::filesystem::path source_;
  std::string digest_;
};

/// Ordered subset of a corpus. Holds a pointer to the corpus, which must
/// outlive the view.
class CorpusView {
 public:
  CorpusView(const Corpus& corpus, std::vector<std::size_t> rows)
      : corpus_(&corpus), rows_(std::move(rows)) {}

  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  const Exemplar& operator[](std::size_t i) const { return (*corpus_)[rows_[i]]; }
  /// Position of the i-th view element in the underlying corpus.
  std::size_t corpus_row(std::size_t i) const { return rows_[i]; }
  const std::vector<std::size_t>& rows() const noexcept { return rows_; }
  const Corpus& corpus() const noexcept { return *corpus_; }

 private:
  const Corpus* corpus_;
  std::vector<std::size_t> rows_;
};

Corpus load_corpus(const std::filesystem::path& path);
/// Parses corpus text (one JSON record per line); `source` only labels errors.
Corpus parse_corpus(std::string_view text, const std::filesystem::path& source = {});
std::string serialize_corpus(const Corpus& corpus);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

CorpusView select_split(const Corpus& corpus, Split split);

}  // namespace tstr
