#include <fstream>
#include <future>
#include <json.hpp>

#include "tstr/digest.hpp"
#include "tstr/embedding.hpp"
#include "tstr/error.hpp"
#include "tstr/io.hpp"

namespace tstr {

using nlohmann::json;

// ---------------------------------------------------------------------------
// EmbeddingStore

EmbeddingStore::EmbeddingStore(std::filesystem::path backing_file) : path_(std::move(backing_file)) {
  if (!std::filesystem::exists(path_)) return;
  const std::string text = io::read_file(path_);
  std::vector<std::string_view> lines;
  io::for_each_line(text, [&](std::string_view line, std::size_t) {
    if (!io::is_blank(line)) lines.push_back(line);
  });
  for (std::size_t i = 0; i < lines.size(); ++i) {
    json rec;
    try {
      rec = json::parse(lines[i]);
    } catch (const json::exception&) {
      // A torn final append is tolerated; anything earlier is corruption.
      if (i + 1 == lines.size() && !text.ends_with('\n')) break;
      throw DataError("embedding cache " + path_.string() + ": malformed line " + std::to_string(i + 1));
    }
    EmbeddingVector v;
    v.provider_tag = rec.at("provider_tag").get<std::string>();
    v.values = rec.at("vector").get<std::vector<double>>();
    if (v.dim() != rec.at("dim").get<std::size_t>()) {
      throw DataError("embedding cache " + path_.string() + ": dim mismatch on line " + std::to_string(i + 1));
    }
    entries_.emplace(rec.at("key").get<std::string>(), std::move(v));
  }
}

std::string EmbeddingStore::key(std::string_view provider_tag, std::string_view text) {
  return Sha256{}.field(provider_tag).field(text).hex();
}

std::optional<EmbeddingVector> EmbeddingStore::get(std::string_view provider_tag, std::string_view text) const {
  const std::string k = key(provider_tag, text);
  std::shared_lock lock(mu_);
  const auto it = entries_.find(k);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingStore::put(std::span<const std::pair<std::string, EmbeddingVector>> entries) {
  std::unique_lock lock(mu_);
  std::string appended;
  for (const auto& [text, vec] : entries) {
    const std::string k = key(vec.provider_tag, text);
    if (!entries_.emplace(k, vec).second) continue;
    appended += json{{"key", k}, {"provider_tag", vec.provider_tag}, {"dim", vec.dim()}, {"vector", vec.values}}.dump();
    appended += '\n';
  }
  if (path_.empty() || appended.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << appended;
  if (!out) throw DataError("cannot append to embedding cache " + path_.string());
}

std::size_t EmbeddingStore::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// embed_batch

std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, EmbeddingProvider& provider,
                                         EmbeddingStore& store, const EmbedOptions& opts) {
  if (texts.empty()) throw UsageError("embed_batch: no texts given");
  if (opts.batch_size == 0 || opts.max_in_flight == 0) throw UsageError("embed_batch: batch size and concurrency must be >= 1");
  const std::string tag = provider.tag();

  std::vector<std::optional<EmbeddingVector>> results(texts.size());
  std::vector<std::string> misses;
  std::unordered_map<std::string, std::vector<std::size_t>> positions;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = store.get(tag, texts[i])) {
      results[i] = std::move(*hit);
      continue;
    }
    auto& pos = positions[texts[i]];
    if (pos.empty()) misses.push_back(texts[i]);
    pos.push_back(i);
  }

  std::vector<std::vector<std::vector<double>>> batch_out((misses.size() + opts.batch_size - 1) / opts.batch_size);
  for (std::size_t wave = 0; wave < batch_out.size(); wave += opts.max_in_flight) {
    std::vector<std::future<std::vector<std::vector<double>>>> inflight;
    const std::size_t wave_end = std::min(batch_out.size(), wave + opts.max_in_flight);
    for (std::size_t b = wave; b < wave_end; ++b) {
      const std::size_t begin = b * opts.batch_size;
      const std::size_t count = std::min(opts.batch_size, misses.size() - begin);
      const std::span<const std::string> batch(misses.data() + begin, count);
      if (wave_end - wave == 1) {
        std::promise<std::vector<std::vector<double>>> p;
        p.set_value(provider.embed(batch));
        inflight.push_back(p.get_future());
      } else {
        inflight.push_back(std::async(std::launch::async, [&provider, batch] { return provider.embed(batch); }));
      }
    }
    for (std::size_t k = 0; k < inflight.size(); ++k) batch_out[wave + k] = inflight[k].get();
  }

  std::vector<std::pair<std::string, EmbeddingVector>> fresh;
  fresh.reserve(misses.size());
  for (std::size_t b = 0; b < batch_out.size(); ++b) {
    const std::size_t begin = b * opts.batch_size;
    const std::size_t count = std::min(opts.batch_size, misses.size() - begin);
    if (batch_out[b].size() != count) {
      throw IntegrityError("provider returned " + std::to_string(batch_out[b].size()) + " vectors for a batch of " +
                           std::to_string(count));
    }
    for (std::size_t k = 0; k < count; ++k) {
      EmbeddingVector v{std::move(batch_out[b][k]), tag};
      if (!normalize_in_place(v.values)) {
        throw IntegrityError("provider returned a zero or non-finite vector for input " + std::to_string(begin + k));
      }
      fresh.emplace_back(misses[begin + k], std::move(v));
    }
  }

  for (const auto& [text, vec] : fresh) {
    for (std::size_t i : positions[text]) results[i] = vec;
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (auto& r : results) out.push_back(std::move(*r));
  for (const EmbeddingVector& v : out) {
    if (v.dim() != out.front().dim()) throw IntegrityError("provider produced mixed embedding dimensions");
  }
  store.put(fresh);
  return out;
}

// ---------------------------------------------------------------------------
// EmbeddingSet

EmbeddingSet::EmbeddingSet(std::string provider_tag, std::size_t dim, std::string corpus_digest)
    : provider_tag_(std::move(provider_tag)), dim_(dim), corpus_digest_(std::move(corpus_digest)) {}

void EmbeddingSet::add(std::string id, std::span<const double> unit_vector) {
  if (unit_vector.size() != dim_) {
    throw ShapeError("embedding for \"" + id + "\" has dim " + std::to_string(unit_vector.size()) +
                     ", expected " + std::to_string(dim_));
  }
  if (!index_.emplace(id, ids_.size()).second) throw DuplicateIdError(id);
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), unit_vector.begin(), unit_vector.end());
}

std::span<const double> EmbeddingSet::at(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) throw DataError("no embedding for id \"" + std::string(id) + "\"");
  return row(it->second);
}

std::string EmbeddingSet::serialize() const {
  std::string out = json{{"format", "tstr.embeddings"},
                         {"version", 1},
                         {"provider_tag", provider_tag_},
                         {"dim", dim_},
                         {"corpus_digest", corpus_digest_},
                         {"n", ids_.size()}}
                        .dump();
  out += '\n';
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const auto r = row(i);
    out += json{{"id", ids_[i]}, {"vector", std::vector<double>(r.begin(), r.end())}}.dump();
    out += '\n';
  }
  return out;
}

EmbeddingSet EmbeddingSet::parse(std::string_view text) {
  EmbeddingSet set;
  bool have_header = false;
  io::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (io::is_blank(line)) return;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw CorpusError(line_no, std::string("embeddings: ") + e.what());
    }
    if (!have_header) {
      if (rec.value("format", "") != "tstr.embeddings") throw DataError("embeddings: wrong format tag");
      set = EmbeddingSet(rec.at("provider_tag").get<std::string>(), rec.at("dim").get<std::size_t>(),
                         rec.at("corpus_digest").get<std::string>());
      have_header = true;
      return;
    }
    const auto v = rec.at("vector").get<std::vector<double>>();
    set.add(rec.at("id").get<std::string>(), v);
  });
  if (!have_header) throw DataError("embeddings: empty file");
  return set;
}

void EmbeddingSet::save(const std::filesystem::path& path) const { io::write_file_atomic(path, serialize()); }

EmbeddingSet EmbeddingSet::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

std::string EmbeddingSet::digest() const { return sha256_hex(serialize()); }

EmbeddingSet embed_corpus(const Corpus& corpus, EmbeddingProvider& provider, EmbeddingStore& store,
                          const EmbedOptions& opts) {
  if (corpus.empty()) throw DataError("cannot embed an empty corpus");
  std::vector<std::string> texts;
  texts.reserve(corpus.size());
  for (const Exemplar& e : corpus) texts.push_back(e.utterance);
  const auto vectors = embed_batch(texts, provider, store, opts);
  EmbeddingSet set(provider.tag(), vectors.front().dim(), corpus.digest());
  for (std::size_t i = 0; i < corpus.size(); ++i) set.add(corpus[i].id, vectors[i].values);
  return set;
}

}  // namespace tstr
