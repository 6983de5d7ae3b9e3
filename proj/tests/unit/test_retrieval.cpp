#include <doctest.h>

#include <algorithm>

#include "gradcheck.hpp"
#include "support.hpp"
#include "tstr/error.hpp"
#include "tstr/retrieval.hpp"
#include "tstr/synth.hpp"

using namespace tstr;

namespace {

/// Cosine ranking over every bank row, computed without the index.
std::vector<std::string> exhaustive_top_k(const CorpusView& bank, const EmbeddingSet& embeds,
                                          const TransformParams* params, std::span<const double> target,
                                          std::size_t k) {
  auto project = [&](std::span<const double> v) {
    if (params != nullptr) return transform_normalized(*params, v);
    std::vector<double> out(v.begin(), v.end());
    normalize_in_place(out);
    return out;
  };
  const auto t = project(target);
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto row = project(embeds.at(bank[i].id));
    if (row.empty()) continue;
    scored.push_back({cosine(t, row), i});
  }
  std::stable_sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) ids.push_back(bank[scored[i].second].id);
  return ids;
}

std::vector<std::string> ids_of(const SelectionResult& r) {
  std::vector<std::string> ids;
  for (const auto& e : r.examples) ids.push_back(e.id);
  return ids;
}

}  // namespace

TEST_CASE("selection matches an exhaustive scan") {
  const Corpus c = synth_corpus(120, 3);
  const EmbeddingSet embeds = test::fallback_embeddings(c);
  const TransformParams params = TransformParams::initialize(embeds.dim(), 32, 16, 4);
  const CorpusView bank = select_split(c, Split::train);
  const RetrievalIndex transformed = build_index(bank, embeds, &params);
  const RetrievalIndex identity = build_index(bank, embeds, nullptr);
  CHECK(identity.model_digest() == kIdentityModel);
  CHECK(transformed.model_digest() == params.digest());
  CHECK(transformed.corpus_digest() == c.digest());
  const CorpusView targets = select_split(c, Split::test);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Exemplar& target = targets[i];
    const auto t = embeds.at(target.id);
    const auto r = select_examples(transformed, t, &params, 8, target.utterance);
    CHECK(ids_of(r) == exhaustive_top_k(bank, embeds, &params, t, 8));
    CHECK(r.examples.size() == 8);
    for (std::size_t i = 1; i < r.examples.size(); ++i) CHECK(r.examples[i - 1].score >= r.examples[i].score);
    CHECK(ids_of(select_examples(identity, t, nullptr, 5)) == exhaustive_top_k(bank, embeds, nullptr, t, 5));
  }
}

TEST_CASE("a planted near-duplicate is ranked first") {
  const Corpus c = synth_corpus(60, 5);
  std::vector<Exemplar> ex = c.exemplars();
  const std::string planted = ex[17].utterance + " ok";
  ex.push_back({"planted", planted, ex[17].code, Split::train});
  const Corpus bank_corpus(ex);
  const EmbeddingSet embeds = test::fallback_embeddings(bank_corpus);
  const TransformParams params = TransformParams::initialize(embeds.dim(), 32, 32, 8);
  const RetrievalIndex index = build_index(bank_corpus.all(), embeds, &params);
  FallbackProvider provider;
  EmbeddingStore store;
  // The target is the planted text itself, minus one character.
  const auto r = select_examples(index, planted.substr(0, planted.size() - 1), provider, store, &params, 3);
  CHECK(r.examples.front().id == "planted");
}

TEST_CASE("k larger than the bank and invalid k") {
  const Corpus c = test::make_corpus({{"alpha beta", "a"}, {"gamma delta", "b"}, {"epsilon zeta", "c"}});
  const EmbeddingSet embeds = test::fallback_embeddings(c, 32);
  const RetrievalIndex index = build_index(c.all(), embeds, nullptr);
  CHECK(select_examples(index, embeds.at("e0"), nullptr, 10).examples.size() == 3);
  CHECK(select_examples(index, embeds.at("e0"), nullptr, 10).examples.front().id == "e0");
  CHECK_THROWS_AS(select_examples(index, embeds.at("e0"), nullptr, 0), UsageError);
}

TEST_CASE("degenerate bank rows are excluded") {
  // "ab" has no trigram and embeds to e_0; a model blind to feature 0 maps
  // it to the zero vector.
  const Corpus c = test::make_corpus({{"ab", "a"}, {"gamma delta epsilon", "b"}});
  const EmbeddingSet embeds = test::fallback_embeddings(c, 32);
  TransformParams blind = TransformParams::initialize(32, 4, 4, 1);
  for (std::size_t r = 0; r < 4; ++r) blind.hidden.weights[r * 32] = 0.0;
  const RetrievalIndex index = build_index(c.all(), embeds, &blind);
  CHECK(index.excluded() == 1);
  CHECK(index.ids() == std::vector<std::string>{"e1"});

  const TransformParams zero = TransformParams::zeros(32, 4, 4);
  CHECK_THROWS_AS(build_index(c.all(), embeds, &zero), DataError);
}

TEST_CASE("model mismatch and provider mismatch are refused") {
  const Corpus c = synth_corpus(40, 2);
  const EmbeddingSet embeds = test::fallback_embeddings(c);
  const TransformParams a = TransformParams::initialize(embeds.dim(), 8, 8, 1);
  const TransformParams b = TransformParams::initialize(embeds.dim(), 8, 8, 2);
  const RetrievalIndex index = build_index(c.all(), embeds, &a);
  CHECK_THROWS_AS(select_examples(index, embeds.at(c[0].id), &b, 3), StaleArtifactError);
  CHECK_THROWS_AS(select_examples(index, embeds.at(c[0].id), nullptr, 3), StaleArtifactError);
  FallbackProvider other(64);
  EmbeddingStore store;
  CHECK_THROWS_AS(select_examples(index, std::string("x y z"), other, store, &a, 3), DataError);
}

TEST_CASE("index files round-trip") {
  test::TempDir dir;
  const Corpus c = synth_corpus(30, 1);
  const EmbeddingSet embeds = test::fallback_embeddings(c);
  const TransformParams p = TransformParams::initialize(embeds.dim(), 8, 8, 1);
  const RetrievalIndex index = build_index(c.all(), embeds, &p);
  index.save(dir / "i.tsi");
  const RetrievalIndex back = RetrievalIndex::load(dir / "i.tsi");
  CHECK(back.serialize() == index.serialize());
  CHECK(back.ids() == index.ids());
  CHECK(back.embeddings_digest() == embeds.digest());
  const auto a = index.row(3), b = back.row(3);
  CHECK(std::equal(a.begin(), a.end(), b.begin()));
}

TEST_CASE("prompt assembly orders examples and parses back") {
  const Corpus bank = test::make_corpus({{"sort by price", "Table.Sort(S, {{\"Price\", Order.Ascending}})"},
                                         {"drop the notes column", "Table.RemoveColumns(S, {\"Notes\"})"},
                                         {"multi\nline utterance", "let\n  x = 1\nin\n  x"}});
  SelectionResult r;
  r.examples = {{"e1", 0.9}, {"e0", 0.5}, {"e2", 0.1}};
  const PromptTemplate tmpl = PromptTemplate::default_template();
  const std::string prompt = assemble_prompt(r, bank, "sort by date", tmpl);
  CHECK(prompt.find("sort by price") < prompt.find("drop the notes column"));
  CHECK(prompt.ends_with("### Target\nUtterance: sort by date\nCode:"));
  const auto parsed = parse_prompt_examples(prompt, tmpl);
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[0].utterance == "multi\nline utterance");
  CHECK(parsed[0].code == "let\n  x = 1\nin\n  x");
  CHECK(parsed[2].code == bank.at("e1").code);

  PromptTemplate first = tmpl;
  first.order = ExampleOrder::most_similar_first;
  CHECK(parse_prompt_examples(assemble_prompt(r, bank, "t", first), first)[0].utterance == "drop the notes column");
}

TEST_CASE("prompt template files") {
  const PromptTemplate t = PromptTemplate::parse(
      "Translate requests to M.\n{{#examples}}\nQ: {{utterance}}\nA: {{code}}\n---\n{{/examples}}\nQ: {{target}}\nA:");
  CHECK(t.preamble == "Translate requests to M.\n");
  CHECK(t.example_block == "Q: {{utterance}}\nA: {{code}}\n---\n");
  CHECK(t.suffix == "Q: {{target}}\nA:");
  CHECK_THROWS_AS(PromptTemplate::parse("no section {{target}}"), DataError);
  CHECK_THROWS_AS(PromptTemplate::parse("{{#examples}}{{utterance}} {{code}}{{/examples}}Q: {{target}}"), DataError);
  CHECK_THROWS_AS(PromptTemplate::parse("{{#examples}}Q: {{utterance}}{{/examples}}Q: {{target}}"), DataError);
}
