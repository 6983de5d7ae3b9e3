#include "stages.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <iostream>
#include <iterator>
#include <json.hpp>
#include <optional>
#include <thread>

#include "tstr/digest.hpp"
#include "tstr/error.hpp"
#include "tstr/evaluation.hpp"
#include "tstr/io.hpp"

namespace tstr::cli {

using nlohmann::json;

namespace {

constexpr std::string_view kEmbeddings = "embeddings.jsonl";
constexpr std::string_view kSimMatrix = "simmatrix.tsm";
constexpr std::string_view kTriplets = "triplets.jsonl";
constexpr std::string_view kModel = "model.json";
constexpr std::string_view kIndex = "index.tsi";

std::string short_digest(const std::string& d) { return d.substr(0, 12); }

void require_fresh(std::string_view artifact, std::string_view input, const std::string& recorded,
                   const std::string& current, std::string_view rerun) {
  if (recorded == current) return;
  throw StaleArtifactError(std::string(artifact) + " is stale: it was built from " + std::string(input) + " " +
                           short_digest(recorded) + " but the current " + std::string(input) + " is " +
                           short_digest(current) + "; re-run `tstr " + std::string(rerun) + "`");
}

void require_exists(const std::filesystem::path& p, std::string_view producer) {
  if (!std::filesystem::exists(p)) {
    throw DataError("missing " + p.string() + "; run `tstr " + std::string(producer) + "` first");
  }
}

Corpus corpus_of(const PipelineConfig& cfg) {
  if (cfg.corpus.empty()) throw UsageError("no corpus configured (--corpus or \"corpus\" in the config)");
  return load_corpus(cfg.corpus);
}

EmbeddingSet embeddings_of(const PipelineConfig& cfg, const Corpus& corpus) {
  const auto path = cfg.artifact(kEmbeddings);
  require_exists(path, "embed");
  EmbeddingSet e = EmbeddingSet::load(path);
  require_fresh("embeddings", "corpus", e.corpus_digest(), corpus.digest(), "embed");
  return e;
}

SimilarityMatrix sim_of(const PipelineConfig& cfg, const Corpus& corpus) {
  const auto path = cfg.artifact(kSimMatrix);
  require_exists(path, "simmatrix");
  SimilarityMatrix s = SimilarityMatrix::load(path);
  require_fresh("similarity matrix", "corpus", s.corpus_digest(), corpus.digest(), "simmatrix");
  require_fresh("similarity matrix", "masking config", s.masking_digest(), cfg.masking_config().digest(),
                "simmatrix");
  if (s.metric() != cfg.metric) {
    throw StaleArtifactError("similarity matrix was computed with metric " + std::string(to_string(s.metric())) +
                             " but the config asks for " + std::string(to_string(cfg.metric)) +
                             "; re-run `tstr simmatrix`");
  }
  return s;
}

struct LoadedModel {
  ModelFile file;
  std::string file_digest;
};

LoadedModel model_of(const PipelineConfig& cfg, const std::filesystem::path& path, const Corpus& corpus,
                     const EmbeddingSet& embeds) {
  require_exists(path, "train");
  const std::string text = io::read_file(path);
  LoadedModel m{ModelFile::parse(text), sha256_hex(text)};
  require_fresh("model", "corpus", m.file.corpus_digest, corpus.digest(), "train");
  require_fresh("model", "embeddings", m.file.embeddings_digest, embeds.digest(), "train");
  const auto triplets = cfg.artifact(kTriplets);
  if (std::filesystem::exists(triplets)) {
    require_fresh("model", "triplets", m.file.triplets_digest, TripletFile::load(triplets).digest(), "train");
  }
  return m;
}

std::size_t thread_count(const PipelineConfig& cfg) {
  if (cfg.threads != 0) return cfg.threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

Split split_flag(const std::string& s, std::string_view flag) {
  const auto v = parse_split(s);
  if (!v) throw UsageError(std::string(flag) + ": expected train or test, got \"" + s + "\"");
  return *v;
}

TrainConfig train_config(const PipelineConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  return t;
}

std::filesystem::path model_path(const StageContext& ctx) {
  return ctx.opts.model.empty() ? ctx.cfg.artifact(kModel) : ctx.opts.model;
}

void save_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_file_atomic(path, text);
}

}  // namespace

void append_manifest(const PipelineConfig& cfg, std::string_view stage, const Digests& inputs,
                     const Digests& outputs) {
  const json line{{"stage", stage},
                  {"tool_version", kToolVersion},
                  {"seed", cfg.seed},
                  {"inputs", inputs},
                  {"outputs", outputs}};
  const auto path = cfg.artifact("manifest.jsonl");
  const std::string text = line.dump() + "\n";
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw DataError("cannot open " + path.string());
  const bool ok = ::write(fd, text.data(), text.size()) == static_cast<ssize_t>(text.size());
  ::close(fd);
  if (!ok) throw DataError("cannot append to " + path.string());
}

void stage_synth(const StageContext& ctx) {
  const Corpus c = synth_corpus(ctx.opts.synth_n, ctx.cfg.seed, ctx.opts.synth_tasks);
  std::filesystem::path path = ctx.opts.out;
  if (path.empty()) path = ctx.cfg.corpus.empty() ? ctx.cfg.artifact("corpus.jsonl") : ctx.cfg.corpus;
  save_text(path, serialize_corpus(c));
  append_manifest(ctx.cfg, "synth",
                  {{"n", std::to_string(ctx.opts.synth_n)}, {"task_types", std::to_string(ctx.opts.synth_tasks)}},
                  {{"corpus", c.digest()}});
  ctx.out << "wrote " << c.size() << " exemplars to " << path.string() << "\n";
}

void stage_embed(const StageContext& ctx) {
  const Corpus corpus = corpus_of(ctx.cfg);
  auto provider = make_provider(ctx.cfg.provider);
  EmbeddingStore store(ctx.cfg.cache_path());
  const EmbeddingSet set = embed_corpus(
      corpus, *provider, store, {.batch_size = ctx.cfg.provider.batch_size, .max_in_flight = ctx.cfg.provider.max_in_flight});
  set.save(ctx.cfg.artifact(kEmbeddings));
  append_manifest(ctx.cfg, "embed", {{"corpus", corpus.digest()}, {"provider", set.provider_tag()}},
                  {{"embeddings", set.digest()}});
  ctx.out << "embedded " << set.size() << " utterances with " << set.provider_tag() << " (dim " << set.dim()
          << ")\n";
}

void stage_simmatrix(const StageContext& ctx) {
  const Corpus corpus = corpus_of(ctx.cfg);
  const MaskingConfig masking = ctx.cfg.masking_config();
  const SimilarityMatrix sim = similarity_matrix(corpus.all(), ctx.cfg.metric, masking, thread_count(ctx.cfg));
  sim.save(ctx.cfg.artifact(kSimMatrix));
  append_manifest(ctx.cfg, "simmatrix", {{"corpus", corpus.digest()}, {"masking", masking.digest()}},
                  {{"simmatrix", sim.digest()}});
  ctx.out << "scored " << corpus.size() * (corpus.size() - 1) / 2 << " code pairs with "
          << to_string(ctx.cfg.metric) << "\n";
}

void stage_curate(const StageContext& ctx) {
  const Corpus corpus = corpus_of(ctx.cfg);
  const EmbeddingSet embeds = embeddings_of(ctx.cfg, corpus);
  const SimilarityMatrix sim = sim_of(ctx.cfg, corpus);
  const Split split = split_flag(ctx.opts.split, "--split");
  TripletFile file;
  file.params = ctx.cfg.curation;
  file.corpus_digest = corpus.digest();
  file.sim_digest = sim.digest();
  file.embeddings_digest = embeds.digest();
  file.split = std::string(to_string(split));
  file.triplets = curate_training_triplets(select_split(corpus, split), sim, embeds, ctx.cfg.curation);
  file.save(ctx.cfg.artifact(kTriplets));
  append_manifest(ctx.cfg, "curate",
                  {{"corpus", corpus.digest()}, {"simmatrix", file.sim_digest}, {"embeddings", file.embeddings_digest}},
                  {{"triplets", file.digest()}});
  ctx.out << "curated " << file.triplets.size() << " training triplets from the " << file.split << " split\n";
}

void stage_train(const StageContext& ctx) {
  const Corpus corpus = corpus_of(ctx.cfg);
  const EmbeddingSet embeds = embeddings_of(ctx.cfg, corpus);
  const auto tpath = ctx.cfg.artifact(kTriplets);
  require_exists(tpath, "curate");
  const TripletFile triplets = TripletFile::load(tpath);
  require_fresh("triplets", "corpus", triplets.corpus_digest, corpus.digest(), "curate");
  require_fresh("triplets", "embeddings", triplets.embeddings_digest, embeds.digest(), "curate");
  const auto spath = ctx.cfg.artifact(kSimMatrix);
  if (std::filesystem::exists(spath)) {
    require_fresh("triplets", "similarity matrix", triplets.sim_digest, sim_of(ctx.cfg, corpus).digest(), "curate");
  }

  const TrainConfig tc = train_config(ctx.cfg);
  const TrainResult result = train(triplets.triplets, embeds, tc);
  ModelFile m;
  m.params = result.params;
  m.config = tc;
  m.corpus_digest = corpus.digest();
  m.provider_tag = embeds.provider_tag();
  m.embeddings_digest = embeds.digest();
  m.triplets_digest = triplets.digest();
  m.final_probe_accuracy = result.report.final_probe_accuracy();
  const auto out = model_path(ctx);
  save_text(out, m.serialize());
  append_manifest(ctx.cfg, "train",
                  {{"corpus", corpus.digest()}, {"embeddings", m.embeddings_digest}, {"triplets", m.triplets_digest}},
                  {{"model", sha256_hex(m.serialize())}, {"params", result.report.params_digest}});
  for (const auto& w : result.report.warnings) ctx.err << "warning: " << w << "\n";
  ctx.out << "trained on " << result.report.train_pairs << " pairs; stopped at epoch " << result.report.stopped_epoch
          << ", best epoch " << result.report.best_epoch << ", probe accuracy " << m.final_probe_accuracy << "\n";
}

void stage_eval_rank(const StageContext& ctx) {
  const Corpus corpus = corpus_of(ctx.cfg);
  const EmbeddingSet embeds = embeddings_of(ctx.cfg, corpus);
  const SimilarityMatrix sim = sim_of(ctx.cfg, corpus);
  Digests inputs{{"corpus", corpus.digest()}, {"embeddings", embeds.digest()}, {"simmatrix", sim.digest()}};
  Digests outputs;

  Benchmark bench;
  if (!ctx.opts.benchmark.empty()) {
    require_exists(ctx.opts.benchmark, "eval-rank");
    bench = Benchmark::load(ctx.opts.benchmark);
    require_fresh("benchmark", "corpus", bench.corpus_digest, corpus.digest(), "eval-rank");
    require_fresh("benchmark", "similarity matrix", bench.sim_digest, sim.digest(), "eval-rank");
    require_fresh("benchmark", "embeddings", bench.embeddings_digest, embeds.digest(), "eval-rank");
    inputs["benchmark"] = bench.digest();
  } else {
    const Split refs = split_flag(ctx.opts.refs, "--refs");
    const Split cands = split_flag(ctx.opts.cands, "--cands");
    bench = build_ranking_benchmark(select_split(corpus, refs), select_split(corpus, cands), sim, embeds,
                                    ctx.cfg.curation, ctx.cfg.benchmark_options());
    const std::string name = "benchmark-" + std::string(to_string(bench.options.mode)) + ".jsonl";
    bench.save(ctx.cfg.artifact(name));
    outputs["benchmark"] = bench.digest();
  }

  std::vector<Scorer> scorers{Scorer::raw_embedding(embeds)};
  const auto mpath = model_path(ctx);
  if (std::filesystem::exists(mpath)) {
    LoadedModel m = model_of(ctx.cfg, mpath, corpus, embeds);
    inputs["model"] = m.file_digest;
    scorers.push_back(Scorer::transformed(embeds, std::move(m.file.params)));
  } else {
    ctx.err << "note: no model at " << mpath.string() << "; scoring raw embeddings only\n";
  }
  scorers.push_back(Scorer::code_oracle(sim));

  const std::string label = bench.ref_split + "-" + bench.cand_split;
  std::string jsonl;
  ctx.out << label << " " << to_string(bench.options.mode) << " benchmark: " << bench.triplets.size()
          << " triplets, " << bench.skipped_refs << " references skipped\n";
  for (const Scorer& s : scorers) {
    const RankReport r = rank_accuracy(s, bench, corpus, label);
    jsonl += rank_report_json(r) + "\n";
    ctx.out << "  " << r.scorer << ": " << r.accuracy << " (" << r.n_correct << "/" << r.n_triplets << ", "
            << r.n_ties << " ties)\n";
  }
  const auto out = ctx.opts.out.empty() ? ctx.cfg.artifact("rank.jsonl") : ctx.opts.out;
  save_text(out, jsonl);
  outputs["report"] = sha256_hex(jsonl);
  append_manifest(ctx.cfg, "eval-rank", inputs, outputs);
}

void stage_eval_sweep(const StageContext& ctx) {
  const Corpus corpus = corpus_of(ctx.cfg);
  const EmbeddingSet embeds = embeddings_of(ctx.cfg, corpus);
  const SimilarityMatrix sim = sim_of(ctx.cfg, corpus);
  Digests inputs{{"corpus", corpus.digest()}, {"embeddings", embeds.digest()}, {"simmatrix", sim.digest()}};
  std::vector<Scorer> scorers{Scorer::raw_embedding(embeds)};
  const auto mpath = model_path(ctx);
  if (std::filesystem::exists(mpath)) {
    LoadedModel m = model_of(ctx.cfg, mpath, corpus, embeds);
    inputs["model"] = m.file_digest;
    scorers.push_back(Scorer::transformed(embeds, std::move(m.file.params)));
  }
  const SweepTable table =
      language_variation_sweep(scorers, corpus, embeds, sim, ctx.cfg.curation, ctx.cfg.benchmark_options());
  const std::string jsonl = table.to_jsonl();
  save_text(ctx.opts.out.empty() ? ctx.cfg.artifact("sweep.jsonl") : ctx.opts.out, jsonl);
  append_manifest(ctx.cfg, "eval-sweep", inputs, {{"report", sha256_hex(jsonl)}});
  ctx.out << table.to_text();
}

void stage_eval_ablation(const StageContext& ctx) {
  const Corpus corpus = corpus_of(ctx.cfg);
  const EmbeddingSet embeds = embeddings_of(ctx.cfg, corpus);
  const SimilarityMatrix sim = sim_of(ctx.cfg, corpus);
  AblationOptions o;
  o.params = ctx.cfg.curation;
  o.train = train_config(ctx.cfg);
  o.benchmark = ctx.cfg.benchmark_options();
  if (!ctx.opts.rows.empty()) {
    o.rows.clear();
    for (const std::string& r : ctx.opts.rows) {
      if (r == "random") {
        o.rows.push_back(Sampling::random);
      } else if (r == "random-x10") {
        o.rows.push_back(Sampling::random_x10);
      } else if (r == "positive-only") {
        o.rows.push_back(Sampling::positive_only);
      } else if (r == "boundary") {
        o.rows.push_back(Sampling::boundary);
      } else {
        throw UsageError("--rows: unknown sampling \"" + r + "\" (random, random-x10, positive-only, boundary)");
      }
    }
  }
  const AblationTable table = sampling_ablation(corpus, sim, embeds, o);
  const std::string jsonl = table.to_jsonl();
  save_text(ctx.opts.out.empty() ? ctx.cfg.artifact("ablation.jsonl") : ctx.opts.out, jsonl);
  append_manifest(ctx.cfg, "eval-ablation",
                  {{"corpus", corpus.digest()}, {"embeddings", embeds.digest()}, {"simmatrix", sim.digest()}},
                  {{"report", sha256_hex(jsonl)}, {"benchmark", table.benchmark_digest}});
  ctx.out << table.to_text();
}

void stage_index(const StageContext& ctx) {
  const Corpus corpus = corpus_of(ctx.cfg);
  const EmbeddingSet embeds = embeddings_of(ctx.cfg, corpus);
  Digests inputs{{"corpus", corpus.digest()}, {"embeddings", embeds.digest()}};
  std::optional<LoadedModel> model;
  if (!ctx.opts.identity) {
    model = model_of(ctx.cfg, model_path(ctx), corpus, embeds);
    inputs["model"] = model->file_digest;
  }
  const CorpusView bank = ctx.opts.split == "all" ? corpus.all() : select_split(corpus, split_flag(ctx.opts.split, "--split"));
  const RetrievalIndex index = build_index(bank, embeds, model ? &model->file.params : nullptr);
  const std::string text = index.serialize();
  save_text(ctx.opts.index.empty() ? ctx.cfg.artifact(kIndex) : ctx.opts.index, text);
  append_manifest(ctx.cfg, "index", inputs, {{"index", sha256_hex(text)}});
  ctx.out << "indexed " << index.size() << " exemplars";
  if (index.excluded() > 0) ctx.out << " (" << index.excluded() << " degenerate rows excluded)";
  ctx.out << "\n";
}

void stage_select(const StageContext& ctx) {
  const auto ipath = ctx.opts.index.empty() ? ctx.cfg.artifact(kIndex) : ctx.opts.index;
  require_exists(ipath, "index");
  const std::string itext = io::read_file(ipath);
  const RetrievalIndex index = RetrievalIndex::parse(itext);
  const Corpus corpus = corpus_of(ctx.cfg);
  require_fresh("index", "corpus", index.corpus_digest(), corpus.digest(), "index");

  std::optional<ModelFile> model;
  if (index.model_digest() != kIdentityModel) {
    const auto mpath = model_path(ctx);
    require_exists(mpath, "train");
    model = ModelFile::load(mpath);
    require_fresh("index", "model", index.model_digest(), model->params.digest(), "index");
  }

  std::string target = ctx.opts.target;
  if (target == "-") {
    target.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
    while (!target.empty() && (target.back() == '\n' || target.back() == '\r')) target.pop_back();
  }
  if (io::is_blank(target)) throw UsageError("select needs a non-empty --target");
  if (ctx.opts.format != "json" && ctx.opts.format != "prompt") {
    throw UsageError("--format must be json or prompt");
  }

  auto provider = make_provider(ctx.cfg.provider);
  EmbeddingStore store(ctx.cfg.cache_path());
  const SelectionResult result =
      select_examples(index, target, *provider, store, model ? &model->params : nullptr, ctx.cfg.k);

  std::string text;
  if (ctx.opts.format == "prompt") {
    PromptTemplate tmpl = ctx.cfg.prompt_template.empty() ? PromptTemplate::default_template()
                                                          : PromptTemplate::load(ctx.cfg.prompt_template);
    tmpl.order = ctx.cfg.order;
    text = assemble_prompt(result, corpus, target, tmpl);
  } else {
    json examples = json::array();
    for (const ScoredExample& e : result.examples) {
      const Exemplar& x = corpus.at(e.id);
      examples.push_back({{"id", e.id}, {"score", e.score}, {"utterance", x.utterance}, {"code", x.code}});
    }
    text = json{{"target", target}, {"model_digest", result.model_digest}, {"k", ctx.cfg.k}, {"examples", examples}}
               .dump(2) +
           "\n";
  }
  Digests outputs;
  if (ctx.opts.out.empty()) {
    ctx.out << text;
  } else {
    save_text(ctx.opts.out, text);
    outputs["selection"] = sha256_hex(text);
  }
  append_manifest(ctx.cfg, "select", {{"index", sha256_hex(itext)}, {"corpus", corpus.digest()}}, outputs);
}

}  // namespace tstr::cli
