#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tstr/code_similarity.hpp"
#include "tstr/corpus.hpp"
#include "tstr/embedding.hpp"

namespace tstr {

enum class PairKind { positive, negative };

std::string_view to_string(PairKind k) noexcept;

/// (anchor utterance, other utterance, code similarity) regression sample.
struct TrainingTriplet {
  std::string anchor_id;
  std::string other_id;
  double target = 0.0;
  PairKind kind = PairKind::positive;

  bool operator==(const TrainingTriplet&) const = default;
};

struct CurationParams {
  std::size_t lambda_k = 4;  ///< positives (and boundary negatives) per anchor
  std::size_t lambda_s = 4;  ///< ranks skipped after the positives

  void validate() const;
};

/// For every anchor of `view`: the top-lambda_k others by code similarity
/// become positives; after skipping lambda_s more, the remaining others are
/// re-ranked by raw embedding cosine and the top-lambda_k become negatives.
/// Ties break by view position. Produces exactly 2 * lambda_k * n triplets
/// in anchor order (positives first, then negatives, each in rank order).
std::vector<TrainingTriplet> curate_training_triplets(const CorpusView& view, const SimilarityMatrix& sim,
                                                      const EmbeddingSet& embeds, const CurationParams& params);

/// Keeps one triplet per unordered pair; positives win over negatives,
/// otherwise the first occurrence wins.
std::vector<TrainingTriplet> deduplicate_pairs(const std::vector<TrainingTriplet>& triplets);

/// `count` uniformly random ordered pairs (i != j) of the view. A pair is
/// labelled positive when `other` is among the anchor's top-lambda_k.
std::vector<TrainingTriplet> random_training_pairs(const CorpusView& view, const SimilarityMatrix& sim,
                                                   const CurationParams& params, std::size_t count,
                                                   std::uint64_t seed);

/// Top-lambda_k positives per anchor plus lambda_k negatives drawn uniformly
/// from the rest of the pool.
std::vector<TrainingTriplet> positive_only_triplets(const CorpusView& view, const SimilarityMatrix& sim,
                                                    const CurationParams& params, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Ranking benchmarks

enum class BenchmarkMode { random, boundary };

std::string_view to_string(BenchmarkMode m) noexcept;
std::optional<BenchmarkMode> parse_benchmark_mode(std::string_view s) noexcept;

struct RankingTriplet {
  std::string ref_id;
  std::string pos_id;
  std::string neg_id;
  double s_pos = 0.0;
  double s_neg = 0.0;
  BenchmarkMode mode = BenchmarkMode::boundary;

  bool operator==(const RankingTriplet&) const = default;
};

struct BenchmarkOptions {
  BenchmarkMode mode = BenchmarkMode::boundary;
  std::uint64_t seed = 0;
  std::size_t per_ref = 4;
  std::size_t max_attempts = 100;  ///< draws per emitted triplet
};

struct Benchmark {
  BenchmarkOptions options;
  CurationParams params;
  std::string ref_split;
  std::string cand_split;
  std::string corpus_digest;
  std::string sim_digest;
  std::string embeddings_digest;
  std::size_t skipped_refs = 0;
  std::vector<RankingTriplet> triplets;

  std::string serialize() const;
  static Benchmark parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Benchmark load(const std::filesystem::path& path);
  std::string digest() const;
};

/// Pairwise ranking benchmark: per reference, (pos, neg) candidates with
/// strictly ordered code similarity. Random mode draws candidate pairs
/// uniformly; boundary mode draws pos from the top-lambda_k by code
/// similarity and neg from the reference's boundary negatives. A reference
/// that cannot yield per_ref distinct triplets is skipped and counted.
Benchmark build_ranking_benchmark(const CorpusView& refs, const CorpusView& cands, const SimilarityMatrix& sim,
                                  const EmbeddingSet& embeds, const CurationParams& params,
                                  const BenchmarkOptions& opts);

/// Per-reference seed derived from the global seed and the reference id.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) noexcept;

// ---------------------------------------------------------------------------
// Triplet file

struct TripletFile {
  CurationParams params;
  std::string corpus_digest;
  std::string sim_digest;
  std::string embeddings_digest;
  std::string split;
  std::vector<TrainingTriplet> triplets;

  std::string serialize() const;
  static TripletFile parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static TripletFile load(const std::filesystem::path& path);
  std::string digest() const;
};

}  // namespace tstr
