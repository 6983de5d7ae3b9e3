#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <unistd.h>
#include <vector>

#include "tstr/code_similarity.hpp"
#include "tstr/corpus.hpp"
#include "tstr/curation.hpp"
#include "tstr/embedding.hpp"
#include "tstr/rng.hpp"

namespace tstr::test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tstr-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string random_string(Rng& rng, std::size_t max_len, std::string_view alphabet = "abcdef") {
  const std::size_t len = rng.below(max_len + 1);
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
  return s;
}

/// Edit distance by the textbook recursion, memoized on suffix positions.
inline std::size_t oracle_levenshtein(const std::u32string& a, const std::u32string& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    const auto key = std::pair{i, j};
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    memo[key] = best;
    return best;
  };
  return go(0, 0);
}

inline double oracle_similarity(const std::string& a, const std::string& b) {
  const std::u32string ua = decode_utf8(a), ub = decode_utf8(b);
  const std::size_t m = std::max(ua.size(), ub.size());
  if (m == 0) return 1.0;
  return 1.0 - static_cast<double>(oracle_levenshtein(ua, ub)) / static_cast<double>(m);
}

/// Boundary curation written out the long way: sort every row completely,
/// take the head as positives, skip, then sort the remainder by cosine.
/// Ties go to the earlier view position.
inline std::vector<TrainingTriplet> oracle_curation(const CorpusView& view, const SimilarityMatrix& sim,
                                                    const EmbeddingSet& embeds, std::size_t lk, std::size_t ls) {
  std::vector<TrainingTriplet> out;
  for (std::size_t i = 0; i < view.size(); ++i) {
    struct Row {
      double s;
      std::size_t j;
    };
    std::vector<Row> row;
    for (std::size_t j = 0; j < view.size(); ++j) {
      if (j == i) continue;
      if (view[j].utterance == view[i].utterance && view[j].code == view[i].code) continue;
      row.push_back({sim.at(view[i].id, view[j].id), j});
    }
    auto by_score = [](const Row& x, const Row& y) { return x.s != y.s ? x.s > y.s : x.j < y.j; };
    std::sort(row.begin(), row.end(), by_score);
    for (std::size_t r = 0; r < lk; ++r) {
      out.push_back({view[i].id, view[row[r].j].id, row[r].s, PairKind::positive});
    }
    std::vector<Row> rest;
    for (std::size_t r = lk + ls; r < row.size(); ++r) {
      rest.push_back({cosine(embeds.at(view[i].id), embeds.at(view[row[r].j].id)), row[r].j});
    }
    std::sort(rest.begin(), rest.end(), by_score);
    for (std::size_t r = 0; r < lk; ++r) {
      out.push_back({view[i].id, view[rest[r].j].id, sim.at(view[i].id, view[rest[r].j].id), PairKind::negative});
    }
  }
  return out;
}

/// Embeddings for every exemplar with the offline provider.
inline EmbeddingSet fallback_embeddings(const Corpus& corpus, std::size_t dim = 256) {
  FallbackProvider provider(dim);
  EmbeddingStore store;
  return embed_corpus(corpus, provider, store);
}

inline Corpus make_corpus(const std::vector<std::pair<std::string, std::string>>& pairs, Split split = Split::train) {
  std::vector<Exemplar> ex;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ex.push_back({"e" + std::to_string(i), pairs[i].first, pairs[i].second, split});
  }
  return Corpus(std::move(ex));
}

}  // namespace tstr::test
