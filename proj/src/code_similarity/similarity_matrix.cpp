#include <bit>
#include <cstring>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "tstr/code_similarity.hpp"
#include "tstr/digest.hpp"
#include "tstr/error.hpp"
#include "tstr/io.hpp"

namespace tstr {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "matrix encoding assumes little-endian");

std::string_view to_string(Metric m) noexcept {
  switch (m) {
    case Metric::edit: return "edit";
    case Metric::template_match: return "template";
    case Metric::sketch: break;
  }
  return "sketch";
}

std::optional<Metric> parse_metric(std::string_view s) noexcept {
  if (s == "edit") return Metric::edit;
  if (s == "sketch") return Metric::sketch;
  if (s == "template") return Metric::template_match;
  return std::nullopt;
}

CodeSimilarity::CodeSimilarity(Metric metric, MaskingConfig cfg)
    : metric_(metric), masker_(std::move(cfg)) {}

PreparedCode CodeSimilarity::prepare(std::string_view code) const {
  PreparedCode p;
  switch (metric_) {
    case Metric::edit: p.chars = decode_utf8(code); break;
    case Metric::sketch: p.chars = decode_utf8(masker_.sketch(code)); break;
    case Metric::template_match: p.tokens = command_template(code, masker_.config().template_rules); break;
  }
  return p;
}

double CodeSimilarity::score(const PreparedCode& a, const PreparedCode& b) const {
  if (metric_ == Metric::template_match) {
    return normalized_edit_similarity<std::string>(std::span<const std::string>(a.tokens),
                                                   std::span<const std::string>(b.tokens));
  }
  return normalized_edit_similarity<char32_t>(std::span<const char32_t>(a.chars),
                                              std::span<const char32_t>(b.chars));
}

SimilarityMatrix::SimilarityMatrix(std::vector<std::string> ids, Metric metric,
                                   std::string corpus_digest, std::string masking_digest)
    : ids_(std::move(ids)),
      metric_(metric),
      corpus_digest_(std::move(corpus_digest)),
      masking_digest_(std::move(masking_digest)) {
  const std::size_t n = ids_.size();
  upper_.assign(n < 2 ? 0 : n * (n - 1) / 2, 0.0f);
  build_index();
}

void SimilarityMatrix::build_index() {
  index_.clear();
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) throw DuplicateIdError(ids_[i]);
  }
}

std::optional<std::size_t> SimilarityMatrix::index_of(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t SimilarityMatrix::require_index(std::string_view id) const {
  const auto i = index_of(id);
  if (!i) throw DataError("similarity matrix has no entry for id \"" + std::string(id) + "\"");
  return *i;
}

void SimilarityMatrix::set(std::size_t i, std::size_t j, double v) {
  if (i == j) return;
  if (i > j) std::swap(i, j);
  upper_[offset(i, j)] = static_cast<float>(v);
}

std::string SimilarityMatrix::serialize() const {
  json header{{"format", "tstr.simmatrix"},
              {"version", 1},
              {"metric", std::string(to_string(metric_))},
              {"corpus_digest", corpus_digest_},
              {"masking_digest", masking_digest_},
              {"n", ids_.size()},
              {"ids", ids_},
              {"encoding", "base64-f32le"}};
  std::string out = header.dump();
  out += '\n';
  const std::size_t n = ids_.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const float* row = upper_.data() + offset(i, i + 1);
    const std::size_t len = n - 1 - i;
    out += base64_encode({reinterpret_cast<const std::uint8_t*>(row), len * sizeof(float)});
    out += '\n';
  }
  return out;
}

SimilarityMatrix SimilarityMatrix::parse(std::string_view text) {
  std::vector<std::string_view> lines;
  io::for_each_line(text, [&](std::string_view line, std::size_t) {
    if (!io::is_blank(line)) lines.push_back(line);
  });
  if (lines.empty()) throw DataError("similarity matrix: empty file");
  json header;
  try {
    header = json::parse(lines[0]);
  } catch (const json::exception& e) {
    throw DataError(std::string("similarity matrix: bad header: ") + e.what());
  }
  if (header.value("format", "") != "tstr.simmatrix") throw DataError("similarity matrix: wrong format tag");
  const auto metric = parse_metric(header.at("metric").get<std::string>());
  if (!metric) throw DataError("similarity matrix: unknown metric");
  SimilarityMatrix m(header.at("ids").get<std::vector<std::string>>(), *metric,
                     header.at("corpus_digest").get<std::string>(),
                     header.value("masking_digest", std::string{}));
  const std::size_t n = m.size();
  if (header.at("n").get<std::size_t>() != n) throw DataError("similarity matrix: n does not match id list");
  if (lines.size() != std::max<std::size_t>(n, 1)) {
    throw DataError("similarity matrix: expected " + std::to_string(n == 0 ? 0 : n - 1) + " rows");
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::string_view line = lines[i + 1];
    const std::size_t len = n - 1 - i;
    std::vector<float> row(len);
    if (line.front() == '[') {
      const auto values = json::parse(line).get<std::vector<double>>();
      if (values.size() != len) throw DataError("similarity matrix: row " + std::to_string(i) + " has wrong length");
      for (std::size_t k = 0; k < len; ++k) row[k] = static_cast<float>(values[k]);
    } else {
      const auto bytes = base64_decode(line);
      if (bytes.size() != len * sizeof(float)) {
        throw DataError("similarity matrix: row " + std::to_string(i) + " has wrong length");
      }
      std::memcpy(row.data(), bytes.data(), bytes.size());
    }
    for (std::size_t k = 0; k < len; ++k) {
      if (!(row[k] >= 0.0f && row[k] <= 1.0f)) throw DataError("similarity matrix: entry outside [0,1]");
      m.upper_[m.offset(i, i + 1) + k] = row[k];
    }
  }
  return m;
}

std::string SimilarityMatrix::digest() const { return sha256_hex(serialize()); }

void SimilarityMatrix::save(const std::filesystem::path& path) const {
  io::write_file_atomic(path, serialize());
}

SimilarityMatrix SimilarityMatrix::load(const std::filesystem::path& path) {
  return parse(io::read_file(path));
}

SimilarityMatrix similarity_matrix(const CorpusView& view, Metric metric, const MaskingConfig& cfg,
                                   unsigned threads) {
  if (view.empty()) throw DataError("similarity matrix over an empty corpus view");
  const CodeSimilarity sim(metric, cfg);
  const std::size_t n = view.size();
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(view[i].id);
  SimilarityMatrix out(std::move(ids), metric, view.corpus().digest(), cfg.digest());

  std::vector<PreparedCode> prepared(n);
  for (std::size_t i = 0; i < n; ++i) {
    try {
      prepared[i] = sim.prepare(view[i].code);
    } catch (const MaskingError& e) {
      throw DataError("masking code of \"" + view[i].id + "\": " + e.what());
    }
  }

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  // Rows are dealt out round-robin; each worker writes disjoint entries.
  auto work = [&](unsigned t) {
    for (std::size_t i = t; i < n; i += threads) {
      for (std::size_t j = i + 1; j < n; ++j) out.set(i, j, sim.score(prepared[i], prepared[j]));
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }
  return out;
}

}  // namespace tstr
