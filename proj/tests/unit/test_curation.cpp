#include <doctest.h>

#include <set>

#include "support.hpp"
#include "tstr/error.hpp"
#include "tstr/synth.hpp"

using namespace tstr;

namespace {

struct Fixture {
  Corpus corpus;
  SimilarityMatrix sim;
  EmbeddingSet embeds;

  explicit Fixture(Corpus c, const char* preset = "m")
      : corpus(std::move(c)),
        sim(similarity_matrix(corpus.all(), Metric::sketch, masking_preset(preset), 1)),
        embeds(test::fallback_embeddings(corpus)) {}
};

/// Rank of `other` in the anchor's full code-similarity ordering.
std::size_t code_rank(const CorpusView& view, const SimilarityMatrix& sim, const std::string& anchor,
                      const std::string& other) {
  const double s = sim.at(anchor, other);
  std::size_t better = 0;
  for (std::size_t j = 0; j < view.size(); ++j) {
    if (view[j].id != anchor && view[j].id != other && sim.at(anchor, view[j].id) > s) ++better;
  }
  return better;
}

}  // namespace

TEST_CASE("curation equals the brute-force oracle") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Fixture f(synth_corpus(50, seed));
    const auto got = curate_training_triplets(f.corpus.all(), f.sim, f.embeds, {4, 4});
    const auto want = test::oracle_curation(f.corpus.all(), f.sim, f.embeds, 4, 4);
    CHECK(got == want);
    CHECK(got.size() == 2 * 4 * 50);
  }
}

TEST_CASE("curation respects other lambda settings") {
  const Fixture f(synth_corpus(40, 9));
  for (auto [k, s] : {std::pair<std::size_t, std::size_t>{1, 0}, {2, 5}, {3, 1}}) {
    const auto got = curate_training_triplets(f.corpus.all(), f.sim, f.embeds, {k, s});
    CHECK(got == test::oracle_curation(f.corpus.all(), f.sim, f.embeds, k, s));
  }
}

TEST_CASE("boundary negatives never outrank positives") {
  const Fixture f(synth_corpus(60, 4));
  const CurationParams p{4, 4};
  const auto triplets = curate_training_triplets(f.corpus.all(), f.sim, f.embeds, p);
  std::map<std::string, double> min_pos, max_neg;
  for (const auto& t : triplets) {
    CHECK(t.target == f.sim.at(t.anchor_id, t.other_id));
    CHECK(t.anchor_id != t.other_id);
    if (t.kind == PairKind::positive) {
      CHECK(code_rank(f.corpus.all(), f.sim, t.anchor_id, t.other_id) < p.lambda_k);
      auto [it, fresh] = min_pos.emplace(t.anchor_id, t.target);
      if (!fresh) it->second = std::min(it->second, t.target);
    } else {
      auto [it, fresh] = max_neg.emplace(t.anchor_id, t.target);
      if (!fresh) it->second = std::max(it->second, t.target);
    }
  }
  for (const auto& [anchor, neg] : max_neg) CHECK(neg <= min_pos.at(anchor));
}

TEST_CASE("curation preconditions") {
  const Fixture f(synth_corpus(20, 1));
  std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  const CorpusView small(f.corpus, rows);
  CHECK_THROWS_AS(curate_training_triplets(small, f.sim, f.embeds, {4, 4}), PoolTooSmallError);
  CHECK_NOTHROW(curate_training_triplets(small, f.sim, f.embeds, {4, 3}));
  CHECK_THROWS_AS(curate_training_triplets(f.corpus.all(), f.sim, f.embeds, {0, 4}), UsageError);
}

TEST_CASE("exact duplicates of the anchor are not candidates") {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 12; ++i) pairs.push_back({"utterance " + std::to_string(i), "f(x" + std::to_string(i) + ")"});
  pairs.push_back(pairs[0]);
  const Fixture f(test::make_corpus(pairs), "generic");
  const auto triplets = curate_training_triplets(f.corpus.all(), f.sim, f.embeds, {2, 1});
  for (const auto& t : triplets) {
    const bool dup_pair = (t.anchor_id == "e0" && t.other_id == "e12") || (t.anchor_id == "e12" && t.other_id == "e0");
    CHECK_FALSE(dup_pair);
  }
}

TEST_CASE("pair deduplication keeps positives") {
  const std::vector<TrainingTriplet> in{
      {"a", "b", 0.2, PairKind::negative},
      {"b", "a", 0.2, PairKind::positive},
      {"a", "c", 0.9, PairKind::positive},
      {"c", "a", 0.9, PairKind::positive},
  };
  const auto out = deduplicate_pairs(in);
  REQUIRE(out.size() == 2);
  CHECK(out[0].kind == PairKind::positive);
  CHECK(out[0].anchor_id == "b");
  CHECK(out[1].anchor_id == "a");
}

TEST_CASE("random and positive-only training sets") {
  const Fixture f(synth_corpus(40, 5));
  const auto random = random_training_pairs(f.corpus.all(), f.sim, {4, 4}, 320, 77);
  CHECK(random.size() == 320);
  CHECK(random == random_training_pairs(f.corpus.all(), f.sim, {4, 4}, 320, 77));
  CHECK(random != random_training_pairs(f.corpus.all(), f.sim, {4, 4}, 320, 78));
  for (const auto& t : random) {
    CHECK(t.anchor_id != t.other_id);
    CHECK(t.target == f.sim.at(t.anchor_id, t.other_id));
  }

  const auto pos = positive_only_triplets(f.corpus.all(), f.sim, {4, 4}, 3);
  CHECK(pos.size() == 2 * 4 * 40);
  const auto boundary = curate_training_triplets(f.corpus.all(), f.sim, f.embeds, {4, 4});
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (pos[i].kind == PairKind::positive) CHECK(pos[i] == boundary[i]);
  }
}

TEST_CASE("benchmarks satisfy the strict ordering") {
  const Fixture f(synth_corpus(80, 6));
  const CorpusView refs = select_split(f.corpus, Split::test);
  const CorpusView cands = select_split(f.corpus, Split::train);
  for (BenchmarkMode mode : {BenchmarkMode::random, BenchmarkMode::boundary}) {
    const BenchmarkOptions opts{mode, 42, 4, 100};
    const Benchmark b = build_ranking_benchmark(refs, cands, f.sim, f.embeds, {4, 4}, opts);
    CHECK(b.triplets.size() + 4 * b.skipped_refs == 4 * refs.size());
    CHECK(!b.triplets.empty());
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const auto& t : b.triplets) {
      CHECK(t.s_pos > t.s_neg);
      CHECK(t.s_pos == f.sim.at(t.ref_id, t.pos_id));
      CHECK(t.s_neg == f.sim.at(t.ref_id, t.neg_id));
      CHECK(t.ref_id != t.pos_id);
      CHECK(t.ref_id != t.neg_id);
      CHECK(seen.emplace(t.ref_id, t.pos_id, t.neg_id).second);
      if (mode == BenchmarkMode::boundary) CHECK(code_rank(cands, f.sim, t.ref_id, t.pos_id) < 4);
    }
    const Benchmark again = build_ranking_benchmark(refs, cands, f.sim, f.embeds, {4, 4}, opts);
    CHECK(again.serialize() == b.serialize());
  }
}

TEST_CASE("identical codes give an empty benchmark") {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 20; ++i) pairs.push_back({"utterance " + std::to_string(i), "same(code)"});
  const Fixture f(test::make_corpus(pairs), "generic");
  for (BenchmarkMode mode : {BenchmarkMode::random, BenchmarkMode::boundary}) {
    const Benchmark b = build_ranking_benchmark(f.corpus.all(), f.corpus.all(), f.sim, f.embeds, {4, 4},
                                                {mode, 1, 4, 100});
    CHECK(b.triplets.empty());
    CHECK(b.skipped_refs == 20);
  }
}

TEST_CASE("benchmark pool preconditions") {
  const Fixture f(synth_corpus(20, 2));
  std::vector<std::size_t> few{0, 1, 2, 3, 4};
  const CorpusView cands(f.corpus, few);
  CHECK_THROWS_AS(build_ranking_benchmark(f.corpus.all(), cands, f.sim, f.embeds, {4, 4}, {}), PoolTooSmallError);
}

TEST_CASE("per-reference seeds depend on seed and id") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
}

TEST_CASE("benchmark and triplet files round-trip") {
  test::TempDir dir;
  const Fixture f(synth_corpus(40, 8));
  const Benchmark b = build_ranking_benchmark(select_split(f.corpus, Split::test), select_split(f.corpus, Split::train),
                                              f.sim, f.embeds, {2, 2}, {BenchmarkMode::boundary, 3, 2, 100});
  b.save(dir / "b.jsonl");
  const Benchmark back = Benchmark::load(dir / "b.jsonl");
  CHECK(back.triplets == b.triplets);
  CHECK(back.digest() == b.digest());
  CHECK(back.options.seed == 3);

  std::string text = b.serialize();
  const auto pos = text.find("\"s_pos\":");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 8, "\"s_pos\":-1,\"x\":");
  CHECK_THROWS_AS(Benchmark::parse(text), DataError);

  TripletFile tf;
  tf.corpus_digest = f.corpus.digest();
  tf.sim_digest = f.sim.digest();
  tf.embeddings_digest = f.embeds.digest();
  tf.split = "train";
  tf.triplets = curate_training_triplets(f.corpus.all(), f.sim, f.embeds, {});
  tf.save(dir / "t.jsonl");
  const TripletFile tback = TripletFile::load(dir / "t.jsonl");
  CHECK(tback.triplets == tf.triplets);
  CHECK(tback.digest() == tf.digest());
}
