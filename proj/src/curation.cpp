#include "tstr/curation.hpp"

#include <algorithm>
#include <json.hpp>
#include <map>
#include <set>
#include <unordered_set>

#include "tstr/digest.hpp"
#include "tstr/error.hpp"
#include "tstr/io.hpp"
#include "tstr/kernels.hpp"
#include "tstr/rng.hpp"

namespace tstr {

using nlohmann::json;

std::string_view to_string(PairKind k) noexcept { return k == PairKind::positive ? "positive" : "negative"; }

std::string_view to_string(BenchmarkMode m) noexcept { return m == BenchmarkMode::random ? "random" : "boundary"; }

std::optional<BenchmarkMode> parse_benchmark_mode(std::string_view s) noexcept {
  if (s == "random") return BenchmarkMode::random;
  if (s == "boundary") return BenchmarkMode::boundary;
  return std::nullopt;
}

void CurationParams::validate() const {
  if (lambda_k < 1) throw UsageError("lambda_k must be >= 1");
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) noexcept {
  return splitmix64(seed ^ splitmix64(fnv1a64(key)));
}

namespace {

/// Row/column lookups for one corpus view.
struct ViewIndex {
  std::vector<std::size_t> sim_row;
  std::vector<std::span<const double>> embedding;
};

ViewIndex index_view(const CorpusView& view, const SimilarityMatrix& sim, const EmbeddingSet* embeds) {
  ViewIndex ix;
  ix.sim_row.reserve(view.size());
  for (std::size_t i = 0; i < view.size(); ++i) {
    ix.sim_row.push_back(sim.require_index(view[i].id));
    if (embeds != nullptr) ix.embedding.push_back(embeds->at(view[i].id));
  }
  return ix;
}

bool same_pair(const Exemplar& a, const Exemplar& b) { return a.utterance == b.utterance && a.code == b.code; }

struct Scored {
  double score;
  std::size_t pos;  // position in the candidate view
};

/// Descending score, ascending position.
bool ranks_before(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.pos < b.pos;
}

/// The per-anchor ranking used for both curation and boundary benchmarks.
struct AnchorRanking {
  std::vector<Scored> positives;  ///< top lambda_k by code similarity
  std::vector<Scored> negatives;  ///< top lambda_k by embedding cosine after the skip
  std::size_t pool = 0;
};

/// `anchor` is an exemplar with sim row and embedding; `pool` lists candidate
/// positions in `cands` (already excluding the anchor and its duplicates).
AnchorRanking rank_for_anchor(std::size_t anchor_sim_row, std::span<const double> anchor_embedding,
                              const std::vector<std::size_t>& pool, const ViewIndex& cand_ix,
                              const SimilarityMatrix& sim, const CurationParams& params) {
  AnchorRanking r;
  r.pool = pool.size();
  std::vector<Scored> by_code;
  by_code.reserve(pool.size());
  for (std::size_t j : pool) by_code.push_back({sim.at(anchor_sim_row, cand_ix.sim_row[j]), j});
  const std::size_t head = std::min(by_code.size(), params.lambda_k + params.lambda_s);
  std::partial_sort(by_code.begin(), by_code.begin() + static_cast<std::ptrdiff_t>(head), by_code.end(),
                    ranks_before);
  const std::size_t n_pos = std::min(params.lambda_k, by_code.size());
  r.positives.assign(by_code.begin(), by_code.begin() + static_cast<std::ptrdiff_t>(n_pos));

  std::vector<Scored> rest;
  for (std::size_t k = head; k < by_code.size(); ++k) {
    const std::size_t j = by_code[k].pos;
    rest.push_back({std::clamp(kernels::dot(anchor_embedding, cand_ix.embedding[j]), -1.0, 1.0), j});
  }
  const std::size_t n_neg = std::min(params.lambda_k, rest.size());
  std::partial_sort(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_neg), rest.end(), ranks_before);
  r.negatives.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_neg));
  return r;
}

}  // namespace

std::vector<TrainingTriplet> curate_training_triplets(const CorpusView& view, const SimilarityMatrix& sim,
                                                      const EmbeddingSet& embeds, const CurationParams& params) {
  params.validate();
  const std::size_t n = view.size();
  const std::size_t needed = 2 * params.lambda_k + params.lambda_s + 1;
  if (n < needed) {
    throw PoolTooSmallError("curation needs at least " + std::to_string(needed) + " exemplars, view has " +
                            std::to_string(n));
  }
  const ViewIndex ix = index_view(view, sim, &embeds);
  std::vector<TrainingTriplet> out;
  out.reserve(2 * params.lambda_k * n);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < n; ++i) {
    pool.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && !same_pair(view[i], view[j])) pool.push_back(j);
    }
    if (pool.size() + 1 < needed) {
      throw PoolTooSmallError("anchor \"" + view[i].id + "\" has only " + std::to_string(pool.size()) +
                              " distinct candidates");
    }
    const AnchorRanking r = rank_for_anchor(ix.sim_row[i], ix.embedding[i], pool, ix, sim, params);
    for (const Scored& s : r.positives) {
      out.push_back({view[i].id, view[s.pos].id, s.score, PairKind::positive});
    }
    for (const Scored& s : r.negatives) {
      out.push_back({view[i].id, view[s.pos].id, sim.at(ix.sim_row[i], ix.sim_row[s.pos]), PairKind::negative});
    }
  }
  return out;
}

std::vector<TrainingTriplet> deduplicate_pairs(const std::vector<TrainingTriplet>& triplets) {
  std::map<std::pair<std::string, std::string>, std::size_t> first;
  std::vector<TrainingTriplet> out;
  for (const TrainingTriplet& t : triplets) {
    auto key = t.anchor_id < t.other_id ? std::pair{t.anchor_id, t.other_id} : std::pair{t.other_id, t.anchor_id};
    const auto [it, inserted] = first.emplace(std::move(key), out.size());
    if (inserted) {
      out.push_back(t);
    } else if (t.kind == PairKind::positive && out[it->second].kind == PairKind::negative) {
      out[it->second] = t;
    }
  }
  return out;
}

std::vector<TrainingTriplet> random_training_pairs(const CorpusView& view, const SimilarityMatrix& sim,
                                                   const CurationParams& params, std::size_t count,
                                                   std::uint64_t seed) {
  params.validate();
  const std::size_t n = view.size();
  if (n < 2) throw PoolTooSmallError("random pairs need at least 2 exemplars");
  const ViewIndex ix = index_view(view, sim, nullptr);
  // Score an anchor needs to reach to count as one of its top-lambda_k.
  std::vector<double> kth_best(n);
  std::vector<double> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.push_back(sim.at(ix.sim_row[i], ix.sim_row[j]));
    }
    const std::size_t k = std::min(params.lambda_k, row.size()) - 1;
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end(), std::greater<>());
    kth_best[i] = row[k];
  }
  Rng rng(seed);
  std::vector<TrainingTriplet> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t i = rng.below(n);
    std::size_t j = rng.below(n - 1);
    if (j >= i) ++j;
    const double s = sim.at(ix.sim_row[i], ix.sim_row[j]);
    out.push_back({view[i].id, view[j].id, s, s >= kth_best[i] ? PairKind::positive : PairKind::negative});
  }
  return out;
}

std::vector<TrainingTriplet> positive_only_triplets(const CorpusView& view, const SimilarityMatrix& sim,
                                                    const CurationParams& params, std::uint64_t seed) {
  params.validate();
  const std::size_t n = view.size();
  if (n < 2 * params.lambda_k + 1) {
    throw PoolTooSmallError("positive-only curation needs at least " + std::to_string(2 * params.lambda_k + 1) +
                            " exemplars");
  }
  const ViewIndex ix = index_view(view, sim, nullptr);
  Rng rng(seed);
  std::vector<TrainingTriplet> out;
  std::vector<Scored> by_code;
  for (std::size_t i = 0; i < n; ++i) {
    by_code.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && !same_pair(view[i], view[j])) by_code.push_back({sim.at(ix.sim_row[i], ix.sim_row[j]), j});
    }
    if (by_code.size() < 2 * params.lambda_k) {
      throw PoolTooSmallError("anchor \"" + view[i].id + "\" has too few distinct candidates");
    }
    std::partial_sort(by_code.begin(), by_code.begin() + static_cast<std::ptrdiff_t>(params.lambda_k), by_code.end(),
                      ranks_before);
    for (std::size_t k = 0; k < params.lambda_k; ++k) {
      out.push_back({view[i].id, view[by_code[k].pos].id, by_code[k].score, PairKind::positive});
    }
    // Uniform sample without replacement from the rest (partial Fisher-Yates).
    std::vector<Scored> rest(by_code.begin() + static_cast<std::ptrdiff_t>(params.lambda_k), by_code.end());
    for (std::size_t k = 0; k < params.lambda_k; ++k) {
      std::swap(rest[k], rest[k + rng.below(rest.size() - k)]);
      out.push_back({view[i].id, view[rest[k].pos].id, rest[k].score, PairKind::negative});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Benchmarks

Benchmark build_ranking_benchmark(const CorpusView& refs, const CorpusView& cands, const SimilarityMatrix& sim,
                                  const EmbeddingSet& embeds, const CurationParams& params,
                                  const BenchmarkOptions& opts) {
  params.validate();
  if (opts.per_ref == 0) throw UsageError("per_ref must be >= 1");
  Benchmark bench;
  bench.options = opts;
  bench.params = params;
  bench.corpus_digest = refs.corpus().digest();
  bench.sim_digest = sim.digest();
  bench.embeddings_digest = embeds.digest();
  if (!refs.empty()) bench.ref_split = std::string(to_string(refs[0].split));
  if (!cands.empty()) bench.cand_split = std::string(to_string(cands[0].split));

  const bool need_embeddings = opts.mode == BenchmarkMode::boundary;
  const ViewIndex ref_ix = index_view(refs, sim, need_embeddings ? &embeds : nullptr);
  const ViewIndex cand_ix = index_view(cands, sim, need_embeddings ? &embeds : nullptr);
  std::unordered_map<std::string, std::size_t> cand_pos;
  for (std::size_t j = 0; j < cands.size(); ++j) cand_pos.emplace(cands[j].id, j);

  const std::size_t min_pool = opts.mode == BenchmarkMode::boundary ? 2 * params.lambda_k + params.lambda_s : 2;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const Exemplar& ref = refs[r];
    std::vector<std::size_t> pool;
    for (std::size_t j = 0; j < cands.size(); ++j) {
      if (cands[j].id != ref.id && !same_pair(ref, cands[j])) pool.push_back(j);
    }
    if (pool.size() < min_pool) {
      const std::size_t overlap = cand_pos.contains(ref.id) ? 1 : 0;
      if (cands.size() - overlap < min_pool) {
        throw PoolTooSmallError("benchmark candidate pool has " + std::to_string(cands.size() - overlap) +
                                " entries, mode " + std::string(to_string(opts.mode)) + " needs " +
                                std::to_string(min_pool));
      }
      ++bench.skipped_refs;
      continue;
    }

    std::vector<std::size_t> pos_set, neg_set;
    if (opts.mode == BenchmarkMode::boundary) {
      const AnchorRanking ar = rank_for_anchor(ref_ix.sim_row[r], ref_ix.embedding[r], pool, cand_ix, sim, params);
      for (const Scored& s : ar.positives) pos_set.push_back(s.pos);
      for (const Scored& s : ar.negatives) neg_set.push_back(s.pos);
    }

    Rng rng(derive_seed(opts.seed, ref.id));
    std::set<std::pair<std::size_t, std::size_t>> used;
    std::vector<RankingTriplet> emitted;
    bool ok = true;
    for (std::size_t t = 0; t < opts.per_ref && ok; ++t) {
      bool found = false;
      for (std::size_t attempt = 0; attempt < opts.max_attempts && !found; ++attempt) {
        std::size_t p = 0, q = 0;
        if (opts.mode == BenchmarkMode::boundary) {
          p = pos_set[rng.below(pos_set.size())];
          q = neg_set[rng.below(neg_set.size())];
        } else {
          const std::size_t a = rng.below(pool.size());
          std::size_t b = rng.below(pool.size() - 1);
          if (b >= a) ++b;
          p = pool[a];
          q = pool[b];
        }
        double sp = sim.at(ref_ix.sim_row[r], cand_ix.sim_row[p]);
        double sq = sim.at(ref_ix.sim_row[r], cand_ix.sim_row[q]);
        if (opts.mode == BenchmarkMode::random && sq > sp) {
          std::swap(p, q);
          std::swap(sp, sq);
        }
        if (!(sp > sq) || !used.emplace(p, q).second) continue;
        emitted.push_back({ref.id, cands[p].id, cands[q].id, sp, sq, opts.mode});
        found = true;
      }
      ok = found;
    }
    if (!ok) {
      ++bench.skipped_refs;
      continue;
    }
    bench.triplets.insert(bench.triplets.end(), emitted.begin(), emitted.end());
  }
  return bench;
}

std::string Benchmark::serialize() const {
  json header{{"format", "tstr.benchmark"},
              {"version", 1},
              {"mode", std::string(to_string(options.mode))},
              {"seed", options.seed},
              {"per_ref", options.per_ref},
              {"max_attempts", options.max_attempts},
              {"lambda_k", params.lambda_k},
              {"lambda_s", params.lambda_s},
              {"ref_split", ref_split},
              {"cand_split", cand_split},
              {"corpus_digest", corpus_digest},
              {"sim_digest", sim_digest},
              {"embeddings_digest", embeddings_digest},
              {"skipped_refs", skipped_refs},
              {"n", triplets.size()}};
  std::string out = json{{"header", header}}.dump();
  out += '\n';
  for (const RankingTriplet& t : triplets) {
    out += json{{"ref_id", t.ref_id}, {"pos_id", t.pos_id}, {"neg_id", t.neg_id},
                {"s_pos", t.s_pos},   {"s_neg", t.s_neg},   {"mode", std::string(to_string(t.mode))}}
               .dump();
    out += '\n';
  }
  return out;
}

Benchmark Benchmark::parse(std::string_view text) {
  Benchmark b;
  bool have_header = false;
  io::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (io::is_blank(line)) return;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw CorpusError(line_no, std::string("benchmark: ") + e.what());
    }
    if (!have_header) {
      const json& h = rec.at("header");
      if (h.value("format", "") != "tstr.benchmark") throw DataError("benchmark: wrong format tag");
      const auto mode = parse_benchmark_mode(h.at("mode").get<std::string>());
      if (!mode) throw DataError("benchmark: unknown mode");
      b.options.mode = *mode;
      b.options.seed = h.at("seed").get<std::uint64_t>();
      b.options.per_ref = h.at("per_ref").get<std::size_t>();
      b.options.max_attempts = h.at("max_attempts").get<std::size_t>();
      b.params.lambda_k = h.at("lambda_k").get<std::size_t>();
      b.params.lambda_s = h.at("lambda_s").get<std::size_t>();
      b.ref_split = h.at("ref_split").get<std::string>();
      b.cand_split = h.at("cand_split").get<std::string>();
      b.corpus_digest = h.at("corpus_digest").get<std::string>();
      b.sim_digest = h.at("sim_digest").get<std::string>();
      b.embeddings_digest = h.at("embeddings_digest").get<std::string>();
      b.skipped_refs = h.at("skipped_refs").get<std::size_t>();
      have_header = true;
      return;
    }
    const auto mode = parse_benchmark_mode(rec.at("mode").get<std::string>());
    if (!mode) throw CorpusError(line_no, "benchmark: unknown mode");
    RankingTriplet t{rec.at("ref_id").get<std::string>(), rec.at("pos_id").get<std::string>(),
                     rec.at("neg_id").get<std::string>(), rec.at("s_pos").get<double>(),
                     rec.at("s_neg").get<double>(), *mode};
    if (!(t.s_pos > t.s_neg)) throw CorpusError(line_no, "benchmark triplet without strict s_pos > s_neg");
    b.triplets.push_back(std::move(t));
  });
  if (!have_header) throw DataError("benchmark: empty file");
  return b;
}

void Benchmark::save(const std::filesystem::path& path) const { io::write_file_atomic(path, serialize()); }
Benchmark Benchmark::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }
std::string Benchmark::digest() const { return sha256_hex(serialize()); }

// ---------------------------------------------------------------------------
// Triplet file

std::string TripletFile::serialize() const {
  json header{{"format", "tstr.triplets"},
              {"version", 1},
              {"lambda_k", params.lambda_k},
              {"lambda_s", params.lambda_s},
              {"split", split},
              {"corpus_digest", corpus_digest},
              {"sim_digest", sim_digest},
              {"embeddings_digest", embeddings_digest},
              {"n", triplets.size()}};
  std::string out = json{{"header", header}}.dump();
  out += '\n';
  for (const TrainingTriplet& t : triplets) {
    out += json{{"anchor_id", t.anchor_id}, {"other_id", t.other_id}, {"target", t.target},
                {"kind", std::string(to_string(t.kind))}}
               .dump();
    out += '\n';
  }
  return out;
}

TripletFile TripletFile::parse(std::string_view text) {
  TripletFile f;
  bool have_header = false;
  io::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (io::is_blank(line)) return;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw CorpusError(line_no, std::string("triplets: ") + e.what());
    }
    if (!have_header) {
      const json& h = rec.at("header");
      if (h.value("format", "") != "tstr.triplets") throw DataError("triplets: wrong format tag");
      f.params.lambda_k = h.at("lambda_k").get<std::size_t>();
      f.params.lambda_s = h.at("lambda_s").get<std::size_t>();
      f.split = h.at("split").get<std::string>();
      f.corpus_digest = h.at("corpus_digest").get<std::string>();
      f.sim_digest = h.at("sim_digest").get<std::string>();
      f.embeddings_digest = h.at("embeddings_digest").get<std::string>();
      have_header = true;
      return;
    }
    const std::string kind = rec.at("kind").get<std::string>();
    if (kind != "positive" && kind != "negative") throw CorpusError(line_no, "triplets: unknown kind " + kind);
    const double target = rec.at("target").get<double>();
    if (!(target >= 0.0 && target <= 1.0)) throw CorpusError(line_no, "triplets: target outside [0,1]");
    f.triplets.push_back({rec.at("anchor_id").get<std::string>(), rec.at("other_id").get<std::string>(), target,
                          kind == "positive" ? PairKind::positive : PairKind::negative});
  });
  if (!have_header) throw DataError("triplets: empty file");
  return f;
}

void TripletFile::save(const std::filesystem::path& path) const { io::write_file_atomic(path, serialize()); }
TripletFile TripletFile::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }
std::string TripletFile::digest() const { return sha256_hex(serialize()); }

}  // namespace tstr
