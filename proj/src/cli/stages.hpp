#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tstr/pipeline.hpp"
#include "tstr/synth.hpp"

namespace tstr::cli {

/// Per-subcommand flags that are not part of PipelineConfig.
struct StageOptions {
  std::size_t synth_n = 200;
  std::size_t synth_tasks = kSynthTaskTypes;
  std::filesystem::path out;
  std::filesystem::path benchmark;
  std::filesystem::path model;
  std::filesystem::path index;
  std::string refs = "test";
  std::string cands = "train";
  std::string split = "train";
  std::string target;
  std::string format = "json";
  std::vector<std::string> rows;
  bool identity = false;
};

struct StageContext {
  const PipelineConfig& cfg;
  const StageOptions& opts;
  std::ostream& out;
  std::ostream& err;
};

using Digests = std::map<std::string, std::string>;

/// Appends one line to <output_dir>/manifest.jsonl.
void append_manifest(const PipelineConfig& cfg, std::string_view stage, const Digests& inputs,
                     const Digests& outputs);

void stage_synth(const StageContext& ctx);
void stage_embed(const StageContext& ctx);
void stage_simmatrix(const StageContext& ctx);
void stage_curate(const StageContext& ctx);
void stage_train(const StageContext& ctx);
void stage_eval_rank(const StageContext& ctx);
void stage_eval_sweep(const StageContext& ctx);
void stage_eval_ablation(const StageContext& ctx);
void stage_index(const StageContext& ctx);
void stage_select(const StageContext& ctx);

}  // namespace tstr::cli
