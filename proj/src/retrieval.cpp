#include "tstr/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <json.hpp>

#include "tstr/digest.hpp"
#include "tstr/error.hpp"
#include "tstr/io.hpp"
#include "tstr/kernels.hpp"

namespace tstr {

using nlohmann::json;

RetrievalIndex::RetrievalIndex(std::size_t dim, std::string model_digest, std::string provider_tag)
    : dim_(dim), model_digest_(std::move(model_digest)), provider_tag_(std::move(provider_tag)) {}

void RetrievalIndex::add(std::string id, std::span<const double> unit_row) {
  if (unit_row.size() != dim_) throw ShapeError("index row for \"" + id + "\" has the wrong dimension");
  ids_.push_back(std::move(id));
  rows_.insert(rows_.end(), unit_row.begin(), unit_row.end());
}

std::string RetrievalIndex::serialize() const {
  static_assert(std::endian::native == std::endian::little, "index encoding assumes little-endian");
  std::string out = json{{"format", "tstr.index"},
                         {"version", 1},
                         {"dim", dim_},
                         {"model_digest", model_digest_},
                         {"provider_tag", provider_tag_},
                         {"corpus_digest", corpus_digest_},
                         {"embeddings_digest", embeddings_digest_},
                         {"excluded", excluded_},
                         {"ids", ids_},
                         {"encoding", "base64-f64le"}}
                        .dump();
  out += '\n';
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const auto r = row(i);
    out += base64_encode({reinterpret_cast<const std::uint8_t*>(r.data()), r.size() * sizeof(double)});
    out += '\n';
  }
  return out;
}

RetrievalIndex RetrievalIndex::parse(std::string_view text) {
  std::vector<std::string_view> lines;
  io::for_each_line(text, [&](std::string_view line, std::size_t) {
    if (!io::is_blank(line)) lines.push_back(line);
  });
  if (lines.empty()) throw DataError("index: empty file");
  json h;
  try {
    h = json::parse(lines[0]);
  } catch (const json::exception& e) {
    throw DataError(std::string("index: bad header: ") + e.what());
  }
  if (h.value("format", "") != "tstr.index") throw DataError("index: wrong format tag");
  RetrievalIndex index(h.at("dim").get<std::size_t>(), h.at("model_digest").get<std::string>(),
                       h.at("provider_tag").get<std::string>());
  index.excluded_ = h.value("excluded", std::size_t{0});
  index.corpus_digest_ = h.value("corpus_digest", "");
  index.embeddings_digest_ = h.value("embeddings_digest", "");
  const auto ids = h.at("ids").get<std::vector<std::string>>();
  if (lines.size() != ids.size() + 1) throw DataError("index: row count does not match id count");
  std::vector<double> row(index.dim_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto bytes = base64_decode(lines[i + 1]);
    if (bytes.size() != index.dim_ * sizeof(double)) throw DataError("index: row " + std::to_string(i) + " has wrong size");
    std::memcpy(row.data(), bytes.data(), bytes.size());
    index.add(ids[i], row);
  }
  return index;
}

void RetrievalIndex::save(const std::filesystem::path& path) const { io::write_file_atomic(path, serialize()); }
RetrievalIndex RetrievalIndex::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

namespace {

std::string model_digest_of(const TransformParams* params) {
  return params != nullptr ? params->digest() : std::string(kIdentityModel);
}

std::vector<double> project(std::span<const double> v, const TransformParams* params) {
  if (params != nullptr) return transform_normalized(*params, v);
  std::vector<double> out(v.begin(), v.end());
  if (!normalize_in_place(out)) return {};
  return out;
}

}  // namespace

RetrievalIndex build_index(const CorpusView& bank, const EmbeddingSet& embeds, const TransformParams* params) {
  const std::size_t dim = params != nullptr ? params->output_dim() : embeds.dim();
  RetrievalIndex index(dim, model_digest_of(params), embeds.provider_tag());
  std::size_t excluded = 0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto row = project(embeds.at(bank[i].id), params);
    if (row.empty()) {
      ++excluded;
      continue;
    }
    index.add(bank[i].id, row);
  }
  index.set_excluded(excluded);
  index.set_sources(bank.corpus().digest(), embeds.digest());
  if (index.empty()) {
    throw DataError("retrieval index is empty: all " + std::to_string(excluded) + " bank vectors are degenerate");
  }
  return index;
}

SelectionResult select_examples(const RetrievalIndex& index, std::span<const double> target_embedding,
                                const TransformParams* params, std::size_t k, std::string target_text) {
  if (k < 1) throw UsageError("k must be >= 1");
  if (index.empty()) throw DataError("cannot select from an empty index");
  const std::string digest = model_digest_of(params);
  if (digest != index.model_digest()) {
    throw StaleArtifactError("refusing to select: index was built with model " + index.model_digest() +
                    " but model " + digest + " was given");
  }
  SelectionResult result;
  result.target = std::move(target_text);
  result.model_digest = digest;
  const auto query = project(target_embedding, params);
  if (query.size() != index.dim()) {
    if (query.empty()) throw DataError("target embedding transforms to a degenerate vector");
    throw ShapeError("target dimension does not match the index");
  }
  struct Hit {
    double score;
    std::size_t pos;
  };
  std::vector<Hit> hits(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    hits[i] = {std::clamp(kernels::dot(query, index.row(i)), -1.0, 1.0), i};
  }
  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                    [](const Hit& a, const Hit& b) { return a.score != b.score ? a.score > b.score : a.pos < b.pos; });
  for (std::size_t i = 0; i < take; ++i) result.examples.push_back({index.ids()[hits[i].pos], hits[i].score});
  return result;
}

SelectionResult select_examples(const RetrievalIndex& index, const std::string& target, EmbeddingProvider& provider,
                                EmbeddingStore& store, const TransformParams* params, std::size_t k) {
  if (provider.tag() != index.provider_tag()) {
    throw DataError("index was built from " + index.provider_tag() + " embeddings, provider is " + provider.tag());
  }
  const auto embedded = embed_batch(std::span<const std::string>(&target, 1), provider, store);
  return select_examples(index, embedded.front().values, params, k, target);
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

constexpr std::string_view kOpen = "{{#examples}}";
constexpr std::string_view kClose = "{{/examples}}";

std::string render(std::string_view text, std::initializer_list<std::pair<std::string_view, std::string_view>> vars) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    bool replaced = false;
    if (text.substr(i).starts_with("{{")) {
      for (const auto& [name, value] : vars) {
        const std::string ph = "{{" + std::string(name) + "}}";
        if (text.substr(i).starts_with(ph)) {
          out += value;
          i += ph.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += text[i++];
  }
  return out;
}

std::string_view leading_literal(std::string_view text) { return text.substr(0, text.find("{{")); }

}  // namespace

void PromptTemplate::validate() const {
  if (example_block.find("{{utterance}}") == std::string::npos || example_block.find("{{code}}") == std::string::npos) {
    throw DataError("prompt template: example block needs {{utterance}} and {{code}}");
  }
  if (suffix.find("{{target}}") == std::string::npos) throw DataError("prompt template: missing {{target}}");
  if (leading_literal(example_block).empty()) throw DataError("prompt template: example block must start with a literal delimiter");
  if (leading_literal(suffix).empty()) throw DataError("prompt template: text before {{target}} must start with a literal");
}

PromptTemplate PromptTemplate::default_template() {
  PromptTemplate t;
  t.preamble = "";
  t.example_block = "### Example\nUtterance: {{utterance}}\nCode: {{code}}\n\n";
  t.suffix = "### Target\nUtterance: {{target}}\nCode:";
  return t;
}

PromptTemplate PromptTemplate::parse(std::string_view text) {
  const auto open = text.find(kOpen);
  const auto close = text.find(kClose);
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw DataError("prompt template: needs an {{#examples}} ... {{/examples}} section");
  }
  auto skip_newline = [&](std::size_t p) { return p < text.size() && text[p] == '\n' ? p + 1 : p; };
  PromptTemplate t;
  t.preamble = std::string(text.substr(0, open));
  const std::size_t block_start = skip_newline(open + kOpen.size());
  t.example_block = std::string(text.substr(block_start, close - block_start));
  t.suffix = std::string(text.substr(skip_newline(close + kClose.size())));
  t.validate();
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

std::string assemble_prompt(const SelectionResult& result, const Corpus& bank, const std::string& target,
                            const PromptTemplate& tmpl) {
  tmpl.validate();
  std::vector<const ScoredExample*> ordered;
  for (const ScoredExample& e : result.examples) ordered.push_back(&e);
  // result.examples is most-similar-first.
  if (tmpl.order == ExampleOrder::most_similar_last) std::reverse(ordered.begin(), ordered.end());
  std::string out = tmpl.preamble;
  for (const ScoredExample* e : ordered) {
    const Exemplar& ex = bank.at(e->id);
    out += render(tmpl.example_block, {{"utterance", ex.utterance}, {"code", ex.code}});
  }
  out += render(tmpl.suffix, {{"target", target}});
  return out;
}

std::vector<ParsedExample> parse_prompt_examples(std::string_view prompt, const PromptTemplate& tmpl) {
  tmpl.validate();
  if (!prompt.starts_with(tmpl.preamble)) throw DataError("prompt does not start with the template preamble");
  const std::string_view suffix_head = leading_literal(tmpl.suffix);
  const auto suffix_at = prompt.rfind(suffix_head);
  if (suffix_at == std::string_view::npos || suffix_at < tmpl.preamble.size()) {
    throw DataError("prompt does not contain the template suffix");
  }
  std::string_view region = prompt.substr(tmpl.preamble.size(), suffix_at - tmpl.preamble.size());

  // Split the block template into literals and placeholder names.
  std::vector<std::string> literals;
  std::vector<std::string> names;
  {
    std::string_view b = tmpl.example_block;
    while (true) {
      const auto open = b.find("{{");
      if (open == std::string_view::npos) {
        literals.emplace_back(b);
        break;
      }
      const auto close = b.find("}}", open);
      literals.emplace_back(b.substr(0, open));
      names.emplace_back(b.substr(open + 2, close - open - 2));
      b.remove_prefix(close + 2);
    }
  }
  const std::string& delim = literals.front();

  std::vector<ParsedExample> out;
  while (!region.empty()) {
    if (!region.starts_with(delim)) throw DataError("prompt example region does not start with the block delimiter");
    auto next = region.find(delim, delim.size());
    std::string_view chunk = region.substr(0, next);
    region = next == std::string_view::npos ? std::string_view{} : region.substr(next);
    chunk.remove_prefix(delim.size());
    ParsedExample ex;
    for (std::size_t k = 0; k < names.size(); ++k) {
      const std::string& lit = literals[k + 1];
      std::size_t end;
      if (k + 1 == names.size()) {
        if (!chunk.ends_with(lit)) throw DataError("prompt example block is truncated");
        end = chunk.size() - lit.size();
      } else {
        end = chunk.find(lit);
        if (end == std::string_view::npos) throw DataError("prompt example block is malformed");
      }
      const std::string value(chunk.substr(0, end));
      if (names[k] == "utterance") ex.utterance = value;
      if (names[k] == "code") ex.code = value;
      chunk.remove_prefix(std::min(chunk.size(), end + lit.size()));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace tstr
