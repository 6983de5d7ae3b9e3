#include "tstr/corpus.hpp"

#include <json.hpp>
#include <set>

#include "tstr/digest.hpp"
#include "tstr/error.hpp"
#include "tstr/io.hpp"

namespace tstr {

using nlohmann::json;

std::string_view to_string(Split s) noexcept { return s == Split::train ? "train" : "test"; }

std::optional<Split> parse_split(std::string_view s) noexcept {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  return std::nullopt;
}

namespace {

json record_json(const Exemplar& e) {
  // nlohmann orders object keys, so the dump is canonical.
  return json{{"id", e.id}, {"utterance", e.utterance}, {"code", e.code},
              {"split", std::string(to_string(e.split))}};
}

}  // namespace

Corpus::Corpus(std::vector<Exemplar> exemplars, std::filesystem::path source)
    : exemplars_(std::move(exemplars)), source_(std::move(source)) {
  Sha256 h;
  index_.reserve(exemplars_.size());
  for (std::size_t i = 0; i < exemplars_.size(); ++i) {
    const Exemplar& e = exemplars_[i];
    if (io::is_blank(e.id)) throw DataError("exemplar " + std::to_string(i) + " has an empty id");
    if (io::is_blank(e.utterance)) throw DataError("exemplar \"" + e.id + "\" has a blank utterance");
    if (io::is_blank(e.code)) throw DataError("exemplar \"" + e.id + "\" has blank code");
    if (!index_.emplace(e.id, i).second) throw DuplicateIdError(e.id);
    h.update(record_json(e).dump()).update("\n");
  }
  digest_ = h.hex();
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Exemplar& Corpus::at(std::string_view id) const {
  const auto pos = find(id);
  if (!pos) throw DataError("unknown exemplar id \"" + std::string(id) + "\"");
  return exemplars_[*pos];
}

CorpusView Corpus::all() const {
  std::vector<std::size_t> rows(exemplars_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return CorpusView(*this, std::move(rows));
}

Corpus parse_corpus(std::string_view text, const std::filesystem::path& source) {
  std::vector<Exemplar> out;
  std::set<std::string> seen_ids;
  io::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (io::is_blank(line)) return;
    // Reject a required field given twice in one record; nlohmann would
    // otherwise keep the last occurrence silently.
    std::set<std::string> keys;
    json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
      if (event == json::parse_event_t::key && depth == 1) {
        const auto key = parsed.get<std::string>();
        if (!keys.insert(key).second &&
            (key == "id" || key == "utterance" || key == "code" || key == "split")) {
          throw CorpusError(line_no, "field \"" + key + "\" given more than once");
        }
      }
      return true;
    };
    json rec;
    try {
      rec = json::parse(line, cb);
    } catch (const json::exception& e) {
      throw CorpusError(line_no, std::string("malformed record: ") + e.what());
    }
    if (!rec.is_object()) throw CorpusError(line_no, "record is not an object");
    Exemplar ex;
    for (const char* field : {"id", "utterance", "code", "split"}) {
      const auto it = rec.find(field);
      if (it == rec.end()) throw CorpusError(line_no, std::string("missing field \"") + field + "\"");
      if (!it->is_string()) throw CorpusError(line_no, std::string("field \"") + field + "\" is not a string");
    }
    ex.id = rec["id"].get<std::string>();
    ex.utterance = rec["utterance"].get<std::string>();
    ex.code = rec["code"].get<std::string>();
    const auto label = rec["split"].get<std::string>();
    const auto split = parse_split(label);
    if (!split) throw CorpusError(line_no, "unknown split \"" + label + "\"");
    ex.split = *split;
    if (io::is_blank(ex.id)) throw CorpusError(line_no, "empty id");
    if (io::is_blank(ex.utterance)) throw CorpusError(line_no, "blank utterance");
    if (io::is_blank(ex.code)) throw CorpusError(line_no, "blank code");
    if (!seen_ids.insert(ex.id).second) throw DuplicateIdError(ex.id);
    out.push_back(std::move(ex));
  });
  return Corpus(std::move(out), source);
}

Corpus load_corpus(const std::filesystem::path& path) {
  return parse_corpus(io::read_file(path), path);
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const Exemplar& e : corpus) {
    out += record_json(e).dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_corpus(corpus));
}

CorpusView select_split(const Corpus& corpus, Split split) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].split == split) rows.push_back(i);
  }
  return CorpusView(corpus, std::move(rows));
}

}  // namespace tstr
