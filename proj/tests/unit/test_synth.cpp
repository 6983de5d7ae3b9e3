#include <doctest.h>

#include <map>
#include <set>

#include "support.hpp"
#include "tstr/error.hpp"
#include "tstr/synth.hpp"

using namespace tstr;

TEST_CASE("synth is deterministic") {
  CHECK(serialize_corpus(synth_corpus(20, 5)) == serialize_corpus(synth_corpus(20, 5)));
  CHECK(synth_corpus(200, 7).digest() == synth_corpus(200, 7).digest());
  CHECK(synth_corpus(200, 7).digest() != synth_corpus(200, 8).digest());
  CHECK_THROWS_AS(synth_corpus(19, 1), UsageError);
}

TEST_CASE("every task has at least four members and both splits are used") {
  for (std::size_t n : {20u, 57u, 200u}) {
    const Corpus c = synth_corpus(n, 3);
    CHECK(c.size() == n);
    std::map<std::size_t, std::size_t> per_task;
    for (std::size_t i = 0; i < n; ++i) ++per_task[synth_label(n, 3, kSynthTaskTypes, i).task];
    for (const auto& [task, count] : per_task) CHECK(count >= 4);
    CHECK(!select_split(c, Split::train).empty());
    CHECK(!select_split(c, Split::test).empty());
  }
}

TEST_CASE("same task means near-identical sketches") {
  const std::size_t n = 200;
  const Corpus c = synth_corpus(n, 7);
  const Masker masker(masking_preset("m"));
  std::map<std::size_t, std::vector<std::size_t>> by_task;
  for (std::size_t i = 0; i < n; ++i) by_task[synth_label(n, 7, kSynthTaskTypes, i).task].push_back(i);
  CHECK(by_task.size() == kSynthTaskTypes);
  double cross_sum = 0;
  std::size_t cross_n = 0;
  for (const auto& [task, members] : by_task) {
    for (std::size_t a : members) {
      for (std::size_t b : members) {
        if (a < b) CHECK(normalized_edit_similarity(masker.sketch(c[a].code), masker.sketch(c[b].code)) >= 0.9);
      }
    }
    const std::size_t other = by_task.at((task + 1) % kSynthTaskTypes).front();
    cross_sum += normalized_edit_similarity(masker.sketch(c[members.front()].code), masker.sketch(c[other].code));
    ++cross_n;
  }
  CHECK(cross_sum / double(cross_n) < 0.9);
}

TEST_CASE("surface style dominates raw embedding similarity") {
  const std::size_t n = 200;
  const Corpus c = synth_corpus(n, 7);
  const EmbeddingSet e = test::fallback_embeddings(c);
  double style_sum = 0, task_sum = 0;
  std::size_t style_n = 0, task_n = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const SynthLabel a = synth_label(n, 7, kSynthTaskTypes, i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const SynthLabel b = synth_label(n, 7, kSynthTaskTypes, j);
      const double cos = cosine(e.at(c[i].id), e.at(c[j].id));
      if (a.style == b.style && a.task != b.task) {
        style_sum += cos;
        ++style_n;
      } else if (a.task == b.task && a.style != b.style) {
        task_sum += cos;
        ++task_n;
      }
    }
  }
  REQUIRE(style_n > 0);
  REQUIRE(task_n > 0);
  CHECK(style_sum / double(style_n) > task_sum / double(task_n));
}
