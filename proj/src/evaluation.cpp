#include "tstr/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "tstr/digest.hpp"
#include "tstr/error.hpp"
#include "tstr/kernels.hpp"

namespace tstr {

using nlohmann::json;

struct Scorer::State {
  const EmbeddingSet* embeds = nullptr;
  const SimilarityMatrix* sim = nullptr;
  std::optional<TransformParams> params;
  Fn fn;
  mutable std::mutex mu;
  mutable std::unordered_map<std::string, std::vector<double>> transformed;

  const std::vector<double>& project(std::string_view id) const {
    std::lock_guard lock(mu);
    auto it = transformed.find(std::string(id));
    if (it == transformed.end()) {
      it = transformed.emplace(std::string(id), transform_normalized(*params, embeds->at(id))).first;
    }
    return it->second;
  }
};

Scorer::Scorer(ScorerKind kind, std::string name, std::shared_ptr<State> state)
    : kind_(kind), name_(std::move(name)), state_(std::move(state)) {}

Scorer Scorer::raw_embedding(const EmbeddingSet& embeds, std::string name) {
  auto s = std::make_shared<State>();
  s->embeds = &embeds;
  return Scorer(ScorerKind::raw_embedding, std::move(name), std::move(s));
}

Scorer Scorer::transformed(const EmbeddingSet& embeds, TransformParams params, std::string name) {
  if (params.input_dim() != embeds.dim()) throw ShapeError("scorer params do not match embedding dimension");
  auto s = std::make_shared<State>();
  s->embeds = &embeds;
  s->params = std::move(params);
  return Scorer(ScorerKind::transformed, std::move(name), std::move(s));
}

Scorer Scorer::code_oracle(const SimilarityMatrix& sim, std::string name) {
  auto s = std::make_shared<State>();
  s->sim = &sim;
  return Scorer(ScorerKind::code_oracle, std::move(name), std::move(s));
}

Scorer Scorer::custom(std::string name, Fn fn) {
  auto s = std::make_shared<State>();
  s->fn = std::move(fn);
  return Scorer(ScorerKind::custom, std::move(name), std::move(s));
}

std::string Scorer::provider_tag() const { return state_->embeds != nullptr ? state_->embeds->provider_tag() : ""; }

std::string Scorer::config_digest() const {
  switch (kind_) {
    case ScorerKind::raw_embedding: return state_->embeds->digest();
    case ScorerKind::transformed: return state_->params->digest();
    case ScorerKind::code_oracle: return state_->sim->digest();
    case ScorerKind::custom: break;
  }
  return "custom";
}

double Scorer::similarity(std::string_view a, std::string_view b) const {
  switch (kind_) {
    case ScorerKind::raw_embedding:
      return cosine(state_->embeds->at(a), state_->embeds->at(b));
    case ScorerKind::transformed: {
      const auto& ta = state_->project(a);
      const auto& tb = state_->project(b);
      if (ta.empty() || tb.empty()) return 0.0;
      return std::clamp(kernels::dot(ta, tb), -1.0, 1.0);
    }
    case ScorerKind::code_oracle:
      return state_->sim->at(a, b);
    case ScorerKind::custom: break;
  }
  return state_->fn(a, b);
}

RankReport rank_accuracy(const Scorer& scorer, const Benchmark& benchmark, const Corpus& corpus, std::string label) {
  if (benchmark.corpus_digest != corpus.digest()) {
    throw StaleArtifactError("benchmark was built from a different corpus (digest mismatch)");
  }
  RankReport r;
  r.scorer = scorer.name();
  r.benchmark = label.empty() ? benchmark.ref_split + "-" + benchmark.cand_split : std::move(label);
  r.benchmark_digest = benchmark.digest();
  r.mode = std::string(to_string(benchmark.options.mode));
  r.corpus_digest = corpus.digest();
  r.scorer_digest = scorer.config_digest();
  for (const RankingTriplet& t : benchmark.triplets) {
    for (const std::string* id : {&t.ref_id, &t.pos_id, &t.neg_id}) {
      if (!corpus.find(*id)) throw DataError("benchmark references unknown id \"" + *id + "\"");
    }
    const double sp = scorer.similarity(t.ref_id, t.pos_id);
    const double sn = scorer.similarity(t.ref_id, t.neg_id);
    r.score_pairs.emplace_back(sp, sn);
    auto& [correct, total] = r.per_mode[std::string(to_string(t.mode))];
    ++total;
    ++r.n_triplets;
    if (sp > sn) {
      ++correct;
      ++r.n_correct;
    } else if (sp == sn) {
      ++r.n_ties;
    }
  }
  r.accuracy = r.n_triplets == 0 ? 0.0 : static_cast<double>(r.n_correct) / static_cast<double>(r.n_triplets);
  return r;
}

std::string rank_report_json(const RankReport& r) {
  json per_mode = json::object();
  for (const auto& [mode, counts] : r.per_mode) per_mode[mode] = {{"correct", counts.first}, {"total", counts.second}};
  return json{{"scorer", r.scorer},
              {"benchmark", r.benchmark},
              {"benchmark_digest", r.benchmark_digest},
              {"mode", r.mode},
              {"corpus_digest", r.corpus_digest},
              {"scorer_digest", r.scorer_digest},
              {"accuracy", r.accuracy},
              {"n_triplets", r.n_triplets},
              {"n_correct", r.n_correct},
              {"n_ties", r.n_ties},
              {"per_mode", per_mode}}
      .dump();
}

// ---------------------------------------------------------------------------
// Sweep

const std::vector<SplitPair>& sweep_columns() {
  static const std::vector<SplitPair> cols{
      {"test-train", Split::test, Split::train},
      {"train-train", Split::train, Split::train},
      {"test-test", Split::test, Split::test},
  };
  return cols;
}

namespace {

std::string pad(std::string s, std::size_t width, bool right = false) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

SweepTable language_variation_sweep(const std::vector<Scorer>& scorers, const Corpus& corpus,
                                    const EmbeddingSet& embeds, const SimilarityMatrix& sim,
                                    const CurationParams& params, const BenchmarkOptions& opts) {
  SweepTable table;
  for (Split s : {Split::train, Split::test}) {
    if (select_split(corpus, s).empty()) {
      throw DataError("language-variation sweep needs a " + std::string(to_string(s)) + " split; corpus has none");
    }
  }
  for (const Scorer& s : scorers) table.scorers.push_back(s.name());
  table.reports.resize(scorers.size());
  for (const SplitPair& col : sweep_columns()) {
    const CorpusView refs = select_split(corpus, col.refs);
    const CorpusView cands = select_split(corpus, col.cands);
    const Benchmark bench = build_ranking_benchmark(refs, cands, sim, embeds, params, opts);
    table.columns.push_back(col.label);
    table.benchmark_digests.push_back(bench.digest());
    for (std::size_t k = 0; k < scorers.size(); ++k) {
      table.reports[k].push_back(rank_accuracy(scorers[k], bench, corpus, col.label));
    }
  }
  return table;
}

std::string SweepTable::to_text() const {
  std::size_t w = 8;
  for (const auto& s : scorers) w = std::max(w, s.size() + 2);
  std::string out = pad("", w);
  for (const auto& c : columns) out += pad(c, 13, true);
  out += '\n';
  for (std::size_t k = 0; k < scorers.size(); ++k) {
    out += pad(scorers[k], w);
    for (const RankReport& r : reports[k]) out += pad(fixed3(r.accuracy), 13, true);
    out += '\n';
  }
  return out;
}

std::string SweepTable::to_jsonl() const {
  std::string out;
  for (const auto& row : reports) {
    for (const RankReport& r : row) out += rank_report_json(r) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation

std::string_view to_string(Sampling s) noexcept {
  switch (s) {
    case Sampling::random: return "random";
    case Sampling::random_x10: return "random x10";
    case Sampling::positive_only: return "positive only";
    case Sampling::boundary: break;
  }
  return "boundary";
}

std::vector<TrainingTriplet> sample_training_set(Sampling sampling, const CorpusView& view, const SimilarityMatrix& sim,
                                                 const EmbeddingSet& embeds, const CurationParams& params,
                                                 std::uint64_t seed) {
  // Random sets are size-matched to boundary curation's 2 * lambda_k * n.
  const std::size_t matched = 2 * params.lambda_k * view.size();
  switch (sampling) {
    case Sampling::random: return random_training_pairs(view, sim, params, matched, seed);
    case Sampling::random_x10: return random_training_pairs(view, sim, params, 10 * matched, seed);
    case Sampling::positive_only: return positive_only_triplets(view, sim, params, seed);
    case Sampling::boundary: break;
  }
  return curate_training_triplets(view, sim, embeds, params);
}

AblationTable sampling_ablation(const Corpus& corpus, const SimilarityMatrix& sim, const EmbeddingSet& embeds,
                                const AblationOptions& opts) {
  const CorpusView train_view = select_split(corpus, Split::train);
  const CorpusView test_view = select_split(corpus, Split::test);
  if (train_view.empty() || test_view.empty()) throw DataError("sampling ablation needs both train and test splits");
  const Benchmark bench = build_ranking_benchmark(test_view, train_view, sim, embeds, opts.params, opts.benchmark);

  AblationTable table;
  table.benchmark_digest = bench.digest();
  for (Sampling s : opts.rows) {
    AblationRow row;
    row.sampling = s;
    try {
      const auto triplets = sample_training_set(s, train_view, sim, embeds, opts.params, opts.train.seed);
      row.training_triplets = triplets.size();
      TrainResult trained = train(triplets, embeds, opts.train);
      row.train = trained.report;
      row.report = rank_accuracy(Scorer::transformed(embeds, std::move(trained.params), std::string(to_string(s))),
                                 bench, corpus, "test-train");
    } catch (const DataError& e) {
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

const AblationRow* AblationTable::row(Sampling s) const {
  for (const AblationRow& r : rows) {
    if (r.sampling == s) return &r;
  }
  return nullptr;
}

std::string AblationTable::to_text() const {
  std::string out = pad("sampling", 16) + pad("pairs", 9, true) + pad("accuracy", 11, true) + "\n";
  for (const AblationRow& r : rows) {
    out += pad(std::string(to_string(r.sampling)), 16) + pad(std::to_string(r.training_triplets), 9, true);
    out += r.error.empty() ? pad(fixed3(r.report.accuracy), 11, true) : "  error: " + r.error;
    out += '\n';
  }
  return out;
}

std::string AblationTable::to_jsonl() const {
  std::string out;
  for (const AblationRow& r : rows) {
    json j = r.error.empty() ? json::parse(rank_report_json(r.report)) : json::object();
    j["sampling"] = std::string(to_string(r.sampling));
    j["training_triplets"] = r.training_triplets;
    j["train_pairs"] = r.train.train_pairs;
    j["stopped_epoch"] = r.train.stopped_epoch;
    j["params_digest"] = r.train.params_digest;
    if (!r.error.empty()) j["error"] = r.error;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace tstr
