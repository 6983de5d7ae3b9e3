#include <sys/file.h>
#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <functional>
#include <optional>
#include <ostream>

#include "stages.hpp"
#include "tstr/error.hpp"

namespace tstr::cli {
namespace {

/// Flags that override config values; unset flags leave the config alone.
struct Overrides {
  std::string config;
  std::optional<std::string> corpus, out_dir, provider, masking, metric, mode, model_name, loss;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> dim, lambda_k, lambda_s, per_ref, hidden, output, epochs, batch, patience, k, threads;
  std::optional<double> lr, dropout;

  void apply(PipelineConfig& c) const {
    if (corpus) c.corpus = *corpus;
    if (out_dir) c.output_dir = *out_dir;
    if (seed) c.seed = *seed;
    if (provider) c.provider.kind = *provider;
    if (dim) c.provider.dim = *dim;
    if (model_name) c.provider.model = *model_name;
    if (masking) c.masking = *masking;
    if (metric) {
      const auto m = parse_metric(*metric);
      if (!m) throw UsageError("--metric: unknown metric \"" + *metric + "\" (edit, sketch, template)");
      c.metric = *m;
    }
    if (mode) {
      const auto m = parse_benchmark_mode(*mode);
      if (!m) throw UsageError("--mode: expected random or boundary");
      c.benchmark_mode = *m;
    }
    if (lambda_k) c.curation.lambda_k = *lambda_k;
    if (lambda_s) c.curation.lambda_s = *lambda_s;
    if (per_ref) c.per_ref = *per_ref;
    if (hidden) c.train.hidden_dim = *hidden;
    if (output) c.train.output_dim = *output;
    if (epochs) c.train.epochs = *epochs;
    if (batch) c.train.batch_size = *batch;
    if (patience) c.train.early_stop_patience = *patience;
    if (lr) c.train.learning_rate = *lr;
    if (dropout) c.train.dropout_rate = *dropout;
    if (loss) {
      if (*loss == "squared") {
        c.train.loss = LossKind::squared;
      } else if (*loss == "absolute") {
        c.train.loss = LossKind::absolute;
      } else {
        throw UsageError("--loss: expected squared or absolute");
      }
    }
    if (k) c.k = *k;
    if (threads) c.threads = *threads;
  }
};

void add_common(CLI::App& sub, Overrides& o) {
  sub.add_option("--config", o.config, "Pipeline config (JSON)");
  sub.add_option("--corpus", o.corpus, "Corpus file (JSONL)");
  sub.add_option("--out-dir", o.out_dir, "Artifact directory");
  sub.add_option("--seed", o.seed, "Global seed");
  sub.add_option("--provider", o.provider, "Embedding provider: fallback or http");
  sub.add_option("--provider-dim", o.dim, "Fallback embedding dimension");
  sub.add_option("--provider-model", o.model_name, "Model name for the http provider");
  sub.add_option("--masking", o.masking, "Masking preset: generic, m, bash");
  sub.add_option("--metric", o.metric, "Code similarity: edit, sketch, template");
  sub.add_option("--mode", o.mode, "Benchmark mode: random or boundary");
  sub.add_option("--lambda-k", o.lambda_k, "Positives per anchor");
  sub.add_option("--lambda-s", o.lambda_s, "Ranks skipped before negatives");
  sub.add_option("--per-ref", o.per_ref, "Benchmark triplets per reference");
  sub.add_option("--hidden", o.hidden, "Hidden width");
  sub.add_option("--output-dim", o.output, "Output width");
  sub.add_option("--epochs", o.epochs, "Maximum epochs");
  sub.add_option("--batch-size", o.batch, "Mini-batch size");
  sub.add_option("--patience", o.patience, "Early-stopping patience (epochs)");
  sub.add_option("--lr", o.lr, "Adam learning rate");
  sub.add_option("--dropout", o.dropout, "Input dropout rate");
  sub.add_option("--loss", o.loss, "Loss: squared or absolute");
  sub.add_option("-k", o.k, "Examples to select");
  sub.add_option("--threads", o.threads, "Worker threads (0: all cores)");
}

class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto path = dir / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw DataError("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw UsageError("another tstr process is using " + dir.string());
    }
  }
  ~DirLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Target similarity tuning: curate, train and evaluate utterance similarity for few-shot retrieval",
               "tstr"};
  app.require_subcommand(1);
  Overrides o;
  StageOptions so;
  std::function<void(const StageContext&)> stage;
  std::string stage_name;

  auto sub = [&](const char* name, const char* help, void (*fn)(const StageContext&)) {
    CLI::App* s = app.add_subcommand(name, help);
    add_common(*s, o);
    s->callback([&stage, &stage_name, fn, name] {
      stage = fn;
      stage_name = name;
    });
    return s;
  };

  CLI::App* synth = sub("synth", "Generate the synthetic corpus", stage_synth);
  synth->add_option("--n", so.synth_n, "Number of exemplars (>= 20)");
  synth->add_option("--tasks", so.synth_tasks, "Number of task types");
  synth->add_option("--out", so.out, "Output corpus path");

  sub("embed", "Embed every utterance of the corpus", stage_embed);
  sub("simmatrix", "Compute pairwise code similarity", stage_simmatrix);
  sub("curate", "Curate boundary training triplets", stage_curate)
      ->add_option("--split", so.split, "Split to curate from");
  CLI::App* tr = sub("train", "Train the similarity transform", stage_train);
  tr->add_option("--model", so.model, "Model output path");

  CLI::App* rank = sub("eval-rank", "Pairwise ranking accuracy", stage_eval_rank);
  rank->add_option("--benchmark", so.benchmark, "Existing benchmark file");
  rank->add_option("--refs", so.refs, "Reference split");
  rank->add_option("--cands", so.cands, "Candidate split");
  rank->add_option("--model", so.model, "Model file");
  rank->add_option("--out", so.out, "Report path");

  CLI::App* sweep = sub("eval-sweep", "Language-variation sweep", stage_eval_sweep);
  sweep->add_option("--model", so.model, "Model file");
  sweep->add_option("--out", so.out, "Report path");

  CLI::App* abl = sub("eval-ablation", "Training-data sampling ablation", stage_eval_ablation);
  abl->add_option("--rows", so.rows, "Subset of random, random-x10, positive-only, boundary")->delimiter(',');
  abl->add_option("--out", so.out, "Report path");

  CLI::App* idx = sub("index", "Build a retrieval index over the bank", stage_index);
  idx->add_option("--model", so.model, "Model file");
  idx->add_flag("--identity", so.identity, "Index raw embeddings (no model)");
  idx->add_option("--split", so.split, "Bank split: train, test or all");
  idx->add_option("--index", so.index, "Index output path");

  CLI::App* sel = sub("select", "Select few-shot examples for a target utterance", stage_select);
  sel->add_option("--index", so.index, "Index file");
  sel->add_option("--model", so.model, "Model file");
  sel->add_option("--target", so.target, "Target utterance, or - for stdin")->required();
  sel->add_option("--format", so.format, "json or prompt");
  sel->add_option("--out", so.out, "Write the selection here instead of stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    PipelineConfig cfg;
    if (!o.config.empty()) cfg = PipelineConfig::load(o.config);
    o.apply(cfg);
    cfg.validate();
    DirLock lock(cfg.output_dir);
    stage(StageContext{cfg, so, out, err});
    return 0;
  } catch (const UsageError& e) {
    err << "tstr " << stage_name << ": " << e.what() << "\n";
    return 1;
  } catch (const ProviderError& e) {
    err << "tstr " << stage_name << ": provider error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    err << "tstr " << stage_name << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "tstr " << stage_name << ": " << e.what() << "\n";
    return 2;
  }
}

}  // namespace tstr::cli
