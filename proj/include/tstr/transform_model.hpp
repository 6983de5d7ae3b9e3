#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tstr/curation.hpp"
#include "tstr/embedding.hpp"
#include "tstr/kernels.hpp"
#include "tstr/rng.hpp"

namespace tstr {

/// Fully connected layer, weights row-major (out x in).
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

  kernels::MatrixView view() const noexcept { return {weights.data(), out, in}; }
  bool operator==(const DenseLayer&) const = default;
};

/// t: R^d -> R^d', linear -> tanh -> linear.
struct TransformParams {
  DenseLayer hidden;  ///< h x d, followed by tanh
  DenseLayer output;  ///< d' x h, linear

  std::size_t input_dim() const noexcept { return hidden.in; }
  std::size_t hidden_dim() const noexcept { return hidden.out; }
  std::size_t output_dim() const noexcept { return output.out; }

  static TransformParams zeros(std::size_t d, std::size_t h, std::size_t d_out);
  /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static TransformParams initialize(std::size_t d, std::size_t h, std::size_t d_out, std::uint64_t seed);

  /// Throws ShapeError if the layers do not chain or hold non-finite values.
  void validate() const;
  std::string digest() const;
  bool operator==(const TransformParams&) const = default;
};

/// Same layout as the parameters it differentiates.
using ParamGradient = TransformParams;

/// Inverted-dropout mask over the input embedding.
struct DropoutMask {
  std::vector<std::uint8_t> keep;
  double rate = 0.0;

  static DropoutMask sample(std::size_t dim, double rate, Rng& rng);
};

std::vector<double> forward(const TransformParams& params, std::span<const double> v,
                            const DropoutMask* mask = nullptr);

/// forward() followed by L2 normalization; empty when the output norm is
/// below the degeneracy threshold.
std::vector<double> transform_normalized(const TransformParams& params, std::span<const double> v);

inline constexpr double kDegenerateNorm = 1e-12;

enum class LossKind { squared, absolute };

struct PairLoss {
  double loss = 0.0;
  double cosine = 0.0;
  bool degenerate = false;  ///< a transformed vector had norm < kDegenerateNorm
};

PairLoss pair_loss(const TransformParams& params, std::span<const double> v1, std::span<const double> v2,
                   double target, LossKind kind = LossKind::squared);

/// Adds d(pair_loss)/d(params) into `grad`, summing both branches. Masks
/// apply to the respective branch inputs.
PairLoss accumulate_gradient(const TransformParams& params, std::span<const double> v1, std::span<const double> v2,
                             double target, const DropoutMask* mask1, const DropoutMask* mask2, LossKind kind,
                             ParamGradient& grad);

ParamGradient gradient(const TransformParams& params, std::span<const double> v1, std::span<const double> v2,
                       double target, const DropoutMask* mask1 = nullptr, const DropoutMask* mask2 = nullptr,
                       LossKind kind = LossKind::squared);

struct TrainConfig {
  std::size_t hidden_dim = 512;
  std::size_t output_dim = 512;
  double dropout_rate = 0.3;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t early_stop_patience = 5;
  double validation_fraction = 0.1;
  LossKind loss = LossKind::squared;
  /// Training stops once an epoch's mean loss is <= this.
  double loss_tolerance = 0.0;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;      ///< mean pair loss per epoch
  std::vector<double> probe_accuracy;  ///< per epoch; empty without a probe
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  std::size_t probe_size = 0;
  std::size_t train_pairs = 0;
  std::size_t degenerate_outputs = 0;
  std::string params_digest;
  std::vector<std::string> warnings;

  double final_probe_accuracy() const {
    return probe_accuracy.empty() || best_epoch == 0 ? 0.0 : probe_accuracy[best_epoch - 1];
  }
};

struct TrainResult {
  TransformParams params;
  TrainReport report;
};

/// Pairwise ranking probe built from held-out anchors' triplets: each
/// (positive, negative) combination with a strictly higher positive target.
struct ProbeItem {
  std::string anchor_id;
  std::string pos_id;
  std::string neg_id;
};

std::vector<ProbeItem> build_probe(const std::vector<TrainingTriplet>& held_out);
double probe_accuracy(const TransformParams& params, const std::vector<ProbeItem>& probe, const EmbeddingSet& embeds);

/// Trains from the seeded initialization with Adam on mini-batches, fresh
/// dropout masks per pair and branch, and early stopping on the probe.
/// Returns the best-probe parameters.
TrainResult train(const std::vector<TrainingTriplet>& triplets, const EmbeddingSet& embeds, const TrainConfig& cfg);

/// Persisted model with its provenance.
struct ModelFile {
  TransformParams params;
  TrainConfig config;
  std::string corpus_digest;
  std::string provider_tag;
  std::string embeddings_digest;
  std::string triplets_digest;
  double final_probe_accuracy = 0.0;

  std::string serialize() const;
  static ModelFile parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static ModelFile load(const std::filesystem::path& path);
};

}  // namespace tstr
