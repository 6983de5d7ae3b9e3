#pragma once

#include <cstddef>
#include <cstdint>

#include "tstr/corpus.hpp"

namespace tstr {

/// Largest number of distinct task types synth_corpus can draw from.
inline constexpr std::size_t kSynthTaskTypes = 25;

/// Synthetic table-manipulation corpus built from latent (task type, surface
/// style) pairs. Code depends only on the task type, with constants varying;
/// utterances wrap a task phrase in a long style-specific preamble and
/// sign-off, so raw character similarity mostly tracks style. `task_types`
/// is clamped so every task has at least four members. Train exemplars use
/// two phrasings per task; test exemplars draw from four. Requires n >= 20.
Corpus synth_corpus(std::size_t n, std::uint64_t seed, std::size_t task_types = kSynthTaskTypes);

struct SynthLabel {
  std::size_t task = 0;
  std::size_t style = 0;
};

/// Latent factors of synth_corpus(n, seed, task_types)[i].
SynthLabel synth_label(std::size_t n, std::uint64_t seed, std::size_t task_types, std::size_t i);

}  // namespace tstr
