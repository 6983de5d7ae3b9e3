#include <cstdlib>
#include <json.hpp>
#include <set>
#include <thread>

#include "tstr/error.hpp"
#include "tstr/io.hpp"
#include "tstr/pipeline.hpp"

namespace tstr::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw UsageError("config: \"" + std::string(where) + "\" must be an object");
  const std::set<std::string_view> known(allowed);
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw UsageError("config: unknown key \"" + key + "\" in " + std::string(where));
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("config: \"") + key + "\" has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

PipelineConfig PipelineConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  reject_unknown(j, "config", {"corpus", "output_dir", "seed", "provider", "masking", "metric", "curation", "train",
                               "retrieval", "threads"});
  PipelineConfig c;
  std::string s;
  if (j.contains("corpus")) {
    read(j, "corpus", s);
    c.corpus = resolve(base_dir, s);
  }
  if (j.contains("output_dir")) {
    read(j, "output_dir", s);
    c.output_dir = resolve(base_dir, s);
  }
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);

  if (j.contains("provider")) {
    const json& p = j["provider"];
    reject_unknown(p, "provider", {"kind", "dim", "model", "url", "batch_size", "max_in_flight", "cache"});
    read(p, "kind", c.provider.kind);
    read(p, "dim", c.provider.dim);
    read(p, "model", c.provider.model);
    read(p, "url", c.provider.url);
    read(p, "batch_size", c.provider.batch_size);
    read(p, "max_in_flight", c.provider.max_in_flight);
    if (p.contains("cache")) {
      read(p, "cache", s);
      c.provider.cache = resolve(base_dir, s);
    }
  }
  if (j.contains("masking")) {
    const json& m = j["masking"];
    reject_unknown(m, "masking", {"preset"});
    read(m, "preset", c.masking);
  }
  if (j.contains("metric")) {
    read(j, "metric", s);
    const auto m = parse_metric(s);
    if (!m) throw UsageError("config: unknown metric \"" + s + "\"");
    c.metric = *m;
  }
  if (j.contains("curation")) {
    const json& cu = j["curation"];
    reject_unknown(cu, "curation", {"lambda_k", "lambda_s", "per_ref", "benchmark_mode"});
    read(cu, "lambda_k", c.curation.lambda_k);
    read(cu, "lambda_s", c.curation.lambda_s);
    read(cu, "per_ref", c.per_ref);
    if (cu.contains("benchmark_mode")) {
      read(cu, "benchmark_mode", s);
      const auto m = parse_benchmark_mode(s);
      if (!m) throw UsageError("config: unknown benchmark mode \"" + s + "\"");
      c.benchmark_mode = *m;
    }
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown(t, "train", {"hidden_dim", "output_dim", "dropout_rate", "epochs", "batch_size", "learning_rate",
                                "beta1", "beta2", "epsilon", "early_stop_patience", "validation_fraction", "loss",
                                "loss_tolerance"});
    read(t, "hidden_dim", c.train.hidden_dim);
    read(t, "output_dim", c.train.output_dim);
    read(t, "dropout_rate", c.train.dropout_rate);
    read(t, "epochs", c.train.epochs);
    read(t, "batch_size", c.train.batch_size);
    read(t, "learning_rate", c.train.learning_rate);
    read(t, "beta1", c.train.beta1);
    read(t, "beta2", c.train.beta2);
    read(t, "epsilon", c.train.epsilon);
    read(t, "early_stop_patience", c.train.early_stop_patience);
    read(t, "validation_fraction", c.train.validation_fraction);
    read(t, "loss_tolerance", c.train.loss_tolerance);
    if (t.contains("loss")) {
      read(t, "loss", s);
      if (s == "squared") {
        c.train.loss = LossKind::squared;
      } else if (s == "absolute") {
        c.train.loss = LossKind::absolute;
      } else {
        throw UsageError("config: unknown loss \"" + s + "\"");
      }
    }
  }
  if (j.contains("retrieval")) {
    const json& r = j["retrieval"];
    reject_unknown(r, "retrieval", {"k", "order", "template"});
    read(r, "k", c.k);
    if (r.contains("order")) {
      read(r, "order", s);
      if (s == "most_similar_last") {
        c.order = ExampleOrder::most_similar_last;
      } else if (s == "most_similar_first") {
        c.order = ExampleOrder::most_similar_first;
      } else {
        throw UsageError("config: unknown example order \"" + s + "\"");
      }
    }
    if (r.contains("template")) {
      read(r, "template", s);
      c.prompt_template = resolve(base_dir, s);
    }
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return parse(text, path.parent_path());
}

void PipelineConfig::validate() const {
  if (provider.kind != "fallback" && provider.kind != "http") {
    throw UsageError("unknown provider \"" + provider.kind + "\" (expected fallback or http)");
  }
  if (provider.kind == "fallback" && provider.dim < 16) throw UsageError("fallback provider needs dim >= 16");
  if (provider.batch_size == 0 || provider.max_in_flight == 0) {
    throw UsageError("provider batch_size and max_in_flight must be positive");
  }
  if (k == 0) throw UsageError("retrieval k must be positive");
  if (per_ref == 0) throw UsageError("per_ref must be positive");
  try {
    masking_config();
    curation.validate();
    TrainConfig t = train;
    t.validate();
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::filesystem::path PipelineConfig::cache_path() const {
  return provider.cache.empty() ? artifact("embed-cache.jsonl") : provider.cache;
}

MaskingConfig PipelineConfig::masking_config() const {
  try {
    return masking_preset(masking);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

BenchmarkOptions PipelineConfig::benchmark_options() const {
  BenchmarkOptions o;
  o.mode = benchmark_mode;
  o.seed = seed;
  o.per_ref = per_ref;
  return o;
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderSettings& settings) {
  if (settings.kind == "fallback") return std::make_unique<FallbackProvider>(settings.dim);
  HttpProviderConfig cfg = HttpProviderConfig::from_environment(settings.model);
  if (!settings.url.empty()) cfg.url = settings.url;
  if (cfg.url.empty()) throw UsageError("http provider needs EMBED_API_URL or provider.url");
  return std::make_unique<HttpProvider>(std::move(cfg));
}

}  // namespace tstr::cli
