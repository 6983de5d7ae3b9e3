#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <limits>

#include "gradcheck.hpp"
#include "support.hpp"
#include "tstr/error.hpp"
#include "tstr/synth.hpp"

using namespace tstr;

TEST_CASE("initialization shapes and bounds") {
  const TransformParams p = TransformParams::initialize(6, 5, 4, 9);
  CHECK(p.input_dim() == 6);
  CHECK(p.hidden_dim() == 5);
  CHECK(p.output_dim() == 4);
  const double limit = std::sqrt(6.0 / (6 + 5));
  for (double w : p.hidden.weights) CHECK(std::abs(w) <= limit);
  for (double b : p.hidden.bias) CHECK(b == 0.0);
  CHECK(p == TransformParams::initialize(6, 5, 4, 9));
  CHECK(p.digest() != TransformParams::initialize(6, 5, 4, 10).digest());
  CHECK_NOTHROW(p.validate());
  TransformParams bad = p;
  bad.output.in = 7;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  TransformParams nan = p;
  nan.hidden.weights[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nan.validate(), ShapeError);
}

TEST_CASE("analytic gradient matches central differences") {
  for (LossKind kind : {LossKind::squared, LossKind::absolute}) {
    for (int c = 0; c < 20; ++c) {
      Rng rng(500 + static_cast<std::uint64_t>(c));
      const TransformParams p = TransformParams::initialize(6, 5, 4, rng.next());
      const auto v1 = test::random_unit(rng, 6), v2 = test::random_unit(rng, 6);
      const double target = rng.uniform01();
      const auto r = test::check_gradient(p, v1, v2, target, kind, 1e-5, 1e-12);
      CHECK(r.checked == 6 * 5 + 5 + 5 * 4 + 4);
      CHECK(r.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("dropout masks gate the gradient of dropped inputs") {
  Rng rng(3);
  const TransformParams p = TransformParams::initialize(6, 5, 4, 1);
  const auto v1 = test::random_unit(rng, 6), v2 = test::random_unit(rng, 6);
  DropoutMask mask;
  mask.rate = 0.5;
  mask.keep = {1, 0, 1, 1, 0, 1};
  const ParamGradient g = gradient(p, v1, v2, 0.3, &mask, &mask);
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(g.hidden.weights[r * 6 + 1] == 0.0);
    CHECK(g.hidden.weights[r * 6 + 4] == 0.0);
  }
  // Inverted dropout: a masked forward pass equals the plain pass on the
  // scaled, zeroed input.
  std::vector<double> scaled(6);
  for (std::size_t i = 0; i < 6; ++i) scaled[i] = mask.keep[i] ? v1[i] / 0.5 : 0.0;
  CHECK(forward(p, v1, &mask) == forward(p, scaled));

  Rng mrng(4);
  const DropoutMask sampled = DropoutMask::sample(1000, 0.3, mrng);
  std::size_t dropped = 0;
  for (auto k : sampled.keep) dropped += k == 0;
  CHECK(dropped > 230);
  CHECK(dropped < 370);
}

TEST_CASE("identical inputs give a near-zero gradient") {
  Rng rng(5);
  const TransformParams p = TransformParams::initialize(6, 5, 4, 2);
  const auto v = test::random_unit(rng, 6);
  const ParamGradient g = gradient(p, v, v, 0.2);
  double worst = 0;
  ParamGradient copy = g;
  test::for_each_param(copy, [&](double& x) { worst = std::max(worst, std::abs(x)); });
  CHECK(worst < 1e-12);
  CHECK(pair_loss(p, v, v, 0.2).cosine == doctest::Approx(1.0));
}

TEST_CASE("loss values and bounds") {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const TransformParams p = TransformParams::initialize(6, 5, 4, rng.next());
    const auto v1 = test::random_unit(rng, 6), v2 = test::random_unit(rng, 6);
    const double t = rng.uniform01();
    const PairLoss sq = pair_loss(p, v1, v2, t);
    const PairLoss ab = pair_loss(p, v1, v2, t, LossKind::absolute);
    CHECK(sq.loss >= 0.0);
    CHECK(sq.loss <= 4.0);
    CHECK(sq.loss == doctest::Approx((sq.cosine - t) * (sq.cosine - t)));
    CHECK(ab.loss == doctest::Approx(std::abs(ab.cosine - t)));
    CHECK(sq.cosine >= -1.0);
    CHECK(sq.cosine <= 1.0);
  }
}

TEST_CASE("degenerate outputs") {
  const TransformParams zero = TransformParams::zeros(6, 5, 4);
  Rng rng(7);
  const auto v1 = test::random_unit(rng, 6), v2 = test::random_unit(rng, 6);
  CHECK(transform_normalized(zero, v1).empty());
  const PairLoss l = pair_loss(zero, v1, v2, 0.5);
  CHECK(l.degenerate);
  CHECK(l.cosine == 0.0);
  CHECK(l.loss == 0.25);
  const ParamGradient g = gradient(zero, v1, v2, 0.5);
  CHECK(g == TransformParams::zeros(6, 5, 4));
}

namespace {

/// Random unit embeddings and pairs whose targets are the cosine under a
/// fixed linear map, so a perfect transform exists.
struct LinearProblem {
  EmbeddingSet embeds{"synthetic/linear", 8, "none"};
  std::vector<TrainingTriplet> triplets;

  explicit LinearProblem(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> proj(4, std::vector<double>(8));
    for (auto& row : proj) {
      for (double& x : row) x = rng.uniform(-1, 1);
    }
    std::vector<std::vector<double>> images;
    for (int i = 0; i < 40; ++i) {
      const auto v = test::random_unit(rng, 8);
      embeds.add("x" + std::to_string(i), v);
      std::vector<double> img(4, 0.0);
      for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 8; ++c) img[r] += proj[r][c] * v[c];
      }
      images.push_back(img);
    }
    for (int k = 0; k < 400; ++k) {
      const std::size_t i = rng.below(40);
      std::size_t j = rng.below(39);
      if (j >= i) ++j;
      triplets.push_back({"x" + std::to_string(i), "x" + std::to_string(j), cosine(images[i], images[j]),
                          PairKind::positive});
    }
  }
};

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hidden_dim = 16;
  cfg.output_dim = 8;
  cfg.dropout_rate = 0.0;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.validation_fraction = 0.0;
  cfg.early_stop_patience = 100;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("training reduces loss on a linearly solvable problem") {
  const LinearProblem prob(21);
  const TrainResult r = train(prob.triplets, prob.embeds, small_config());
  REQUIRE(r.report.train_loss.size() == 10);
  CHECK(r.report.train_loss[9] < 0.5 * r.report.train_loss[0]);
  CHECK(!r.report.warnings.empty());
  CHECK(r.report.params_digest == r.params.digest());
}

TEST_CASE("training is deterministic and seed dependent") {
  const LinearProblem prob(22);
  TrainConfig cfg = small_config();
  cfg.dropout_rate = 0.3;
  cfg.validation_fraction = 0.2;
  const TrainResult a = train(prob.triplets, prob.embeds, cfg);
  const TrainResult b = train(prob.triplets, prob.embeds, cfg);
  CHECK(a.params == b.params);
  CHECK(a.report.train_loss == b.report.train_loss);
  cfg.seed = 2;
  CHECK(train(prob.triplets, prob.embeds, cfg).params.digest() != a.params.digest());
}

TEST_CASE("training stops once the loss tolerance is met") {
  const LinearProblem prob(23);
  TrainConfig cfg = small_config();
  cfg.loss_tolerance = 10.0;
  const TrainResult r = train(prob.triplets, prob.embeds, cfg);
  CHECK(r.report.stopped_epoch == 1);
  CHECK(r.report.train_loss.size() == 1);
}

TEST_CASE("divergence is reported") {
  const LinearProblem prob(24);
  TrainConfig cfg = small_config();
  cfg.learning_rate = 1e308;
  CHECK_THROWS_AS(train(prob.triplets, prob.embeds, cfg), TrainingError);
  CHECK_THROWS_AS(train({}, prob.embeds, small_config()), DataError);
  cfg = small_config();
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(train(prob.triplets, prob.embeds, cfg), UsageError);
}

TEST_CASE("trained model beats its initialization on held-out pairs") {
  const Corpus c = synth_corpus(200, 7);
  const SimilarityMatrix sim = similarity_matrix(c.all(), Metric::sketch, masking_preset("m"), 1);
  const EmbeddingSet embeds = test::fallback_embeddings(c);
  const auto train_set = curate_training_triplets(select_split(c, Split::train), sim, embeds, {});
  const auto test_set = curate_training_triplets(select_split(c, Split::test), sim, embeds, {});
  TrainConfig cfg;
  cfg.hidden_dim = 64;
  cfg.output_dim = 64;
  cfg.seed = 3;
  const TrainResult r = train(train_set, embeds, cfg);
  const auto probe = build_probe(test_set);
  REQUIRE(!probe.empty());
  Rng rng(cfg.seed);
  const TransformParams initial = TransformParams::initialize(embeds.dim(), 64, 64, rng.next());
  CHECK(probe_accuracy(r.params, probe, embeds) > probe_accuracy(initial, probe, embeds));
  CHECK(r.report.final_probe_accuracy() > 0.5);
  CHECK(r.report.probe_size > 0);
}

TEST_CASE("probe construction") {
  const std::vector<TrainingTriplet> held{{"a", "p1", 0.9, PairKind::positive},
                                          {"a", "p2", 0.5, PairKind::positive},
                                          {"a", "n1", 0.5, PairKind::negative},
                                          {"a", "n2", 0.1, PairKind::negative}};
  const auto probe = build_probe(held);
  // p2 vs n1 has equal targets and is dropped.
  CHECK(probe.size() == 3);
}

TEST_CASE("model files round-trip bitwise") {
  test::TempDir dir;
  const LinearProblem prob(25);
  const TrainResult r = train(prob.triplets, prob.embeds, small_config());
  ModelFile m;
  m.params = r.params;
  m.config = small_config();
  m.corpus_digest = "c";
  m.provider_tag = prob.embeds.provider_tag();
  m.embeddings_digest = "e";
  m.triplets_digest = "t";
  m.final_probe_accuracy = 0.75;
  m.save(dir / "model.json");
  const ModelFile back = ModelFile::load(dir / "model.json");
  CHECK(back.params == m.params);
  CHECK(back.serialize() == m.serialize());
  CHECK(back.config.learning_rate == m.config.learning_rate);
  CHECK(back.embeddings_digest == "e");

  auto doc = nlohmann::json::parse(m.serialize());
  doc["layers"][0]["w"][0] = doc["layers"][0]["w"][0].get<double>() + 1.0;
  CHECK_THROWS_WITH_AS(ModelFile::parse(doc.dump()), doctest::Contains("digest"), DataError);
}
