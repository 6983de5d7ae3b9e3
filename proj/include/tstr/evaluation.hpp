#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tstr/code_similarity.hpp"
#include "tstr/corpus.hpp"
#include "tstr/curation.hpp"
#include "tstr/embedding.hpp"
#include "tstr/transform_model.hpp"

namespace tstr {

enum class ScorerKind { raw_embedding, transformed, code_oracle, custom };

/// Utterance-pair similarity used to decide a ranking triplet.
class Scorer {
 public:
  using Fn = std::function<double(std::string_view, std::string_view)>;

  static Scorer raw_embedding(const EmbeddingSet& embeds, std::string name = "raw");
  static Scorer transformed(const EmbeddingSet& embeds, TransformParams params, std::string name = "tstr");
  /// Scores candidates by code-code similarity: the ceiling for any
  /// utterance-side scorer.
  static Scorer code_oracle(const SimilarityMatrix& sim, std::string name = "code-oracle");
  static Scorer custom(std::string name, Fn fn);

  ScorerKind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  /// Provider tag for embedding scorers, empty otherwise.
  std::string provider_tag() const;
  /// Digest of whatever the scorer depends on (params, matrix, embeddings).
  std::string config_digest() const;

  double similarity(std::string_view a, std::string_view b) const;

 private:
  struct State;
  Scorer(ScorerKind kind, std::string name, std::shared_ptr<State> state);

  ScorerKind kind_;
  std::string name_;
  std::shared_ptr<State> state_;
};

struct RankReport {
  std::string scorer;
  std::string benchmark;  ///< label, e.g. "test-train"
  std::string benchmark_digest;
  std::string mode;
  std::string corpus_digest;
  std::string scorer_digest;
  double accuracy = 0.0;
  std::size_t n_triplets = 0;
  std::size_t n_correct = 0;
  std::size_t n_ties = 0;
  /// mode -> (correct, total)
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_mode;
  /// (sim(ref, pos), sim(ref, neg)) per triplet, for external plotting.
  std::vector<std::pair<double, double>> score_pairs;
};

/// Fraction of triplets with sim(ref, pos) > sim(ref, neg); exact ties count
/// as incorrect and are tallied separately.
RankReport rank_accuracy(const Scorer& scorer, const Benchmark& benchmark, const Corpus& corpus,
                         std::string label = {});

/// Reference split / candidate split pairs of the language-variation sweep,
/// in table column order.
struct SplitPair {
  std::string label;
  Split refs;
  Split cands;
};
const std::vector<SplitPair>& sweep_columns();

struct SweepTable {
  std::vector<std::string> columns;
  std::vector<std::string> benchmark_digests;
  std::vector<std::string> scorers;
  /// reports[scorer][column]
  std::vector<std::vector<RankReport>> reports;

  std::string to_text() const;
  std::string to_jsonl() const;
};

/// Builds one benchmark per sweep column with the shared options and
/// evaluates every scorer on each.
SweepTable language_variation_sweep(const std::vector<Scorer>& scorers, const Corpus& corpus,
                                    const EmbeddingSet& embeds, const SimilarityMatrix& sim,
                                    const CurationParams& params, const BenchmarkOptions& opts);

enum class Sampling { random, random_x10, positive_only, boundary };
std::string_view to_string(Sampling s) noexcept;

struct AblationRow {
  Sampling sampling;
  std::size_t training_triplets = 0;
  TrainReport train;
  RankReport report;
  std::string error;  ///< set when this row's curation or training failed
};

struct AblationTable {
  std::string benchmark_digest;
  std::vector<AblationRow> rows;

  const AblationRow* row(Sampling s) const;
  std::string to_text() const;
  std::string to_jsonl() const;
};

struct AblationOptions {
  CurationParams params;
  TrainConfig train;
  BenchmarkOptions benchmark;  ///< mode should be boundary
  std::vector<Sampling> rows{Sampling::random, Sampling::random_x10, Sampling::positive_only, Sampling::boundary};
};

/// Trains one model per sampling strategy on the train split (identical
/// config and seed) and scores each on one shared test-train benchmark.
AblationTable sampling_ablation(const Corpus& corpus, const SimilarityMatrix& sim, const EmbeddingSet& embeds,
                                const AblationOptions& opts);

/// Training set for one sampling strategy over `view`.
std::vector<TrainingTriplet> sample_training_set(Sampling sampling, const CorpusView& view, const SimilarityMatrix& sim,
                                                 const EmbeddingSet& embeds, const CurationParams& params,
                                                 std::uint64_t seed);

std::string rank_report_json(const RankReport& r);

}  // namespace tstr
