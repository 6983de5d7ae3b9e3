#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "tstr/code_similarity.hpp"
#include "tstr/curation.hpp"
#include "tstr/embedding.hpp"
#include "tstr/retrieval.hpp"
#include "tstr/transform_model.hpp"

namespace tstr::cli {

inline constexpr std::string_view kToolVersion = "tstr 0.1.0";

struct ProviderSettings {
  std::string kind = "fallback";  ///< fallback | http
  std::size_t dim = 256;          ///< fallback only
  std::string model = "text-embedding-3-small";
  std::string url;                ///< overrides EMBED_API_URL when set
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 4;
  std::filesystem::path cache;    ///< default: <output_dir>/embed-cache.jsonl
};

struct PipelineConfig {
  std::filesystem::path corpus;
  std::filesystem::path output_dir = "tstr-out";
  std::uint64_t seed = 0;
  ProviderSettings provider;
  std::string masking = "generic";
  Metric metric = Metric::sketch;
  CurationParams curation;
  BenchmarkMode benchmark_mode = BenchmarkMode::boundary;
  std::size_t per_ref = 4;
  TrainConfig train;
  std::size_t k = 8;
  ExampleOrder order = ExampleOrder::most_similar_last;
  std::filesystem::path prompt_template;
  std::size_t threads = 0;  ///< 0: hardware concurrency

  /// Parses a config document. Relative paths resolve against `base_dir`.
  /// Unknown keys, presets or metrics raise UsageError.
  static PipelineConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  void validate() const;

  std::filesystem::path artifact(std::string_view name) const { return output_dir / std::string(name); }
  std::filesystem::path cache_path() const;
  MaskingConfig masking_config() const;
  BenchmarkOptions benchmark_options() const;
};

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderSettings& settings);

/// Runs one subcommand; args exclude the program name. Returns the process
/// exit status: 0 success, 1 usage, 2 data, 3 provider.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tstr::cli
