#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tstr/error.hpp"
#include "tstr/transform_model.hpp"

namespace tstr {

void TrainConfig::validate() const {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw UsageError("dropout_rate must be in [0, 1)");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (hidden_dim < 1 || output_dim < 1) throw UsageError("layer widths must be >= 1");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw UsageError("validation_fraction must be in [0, 1)");
  }
}

std::vector<ProbeItem> build_probe(const std::vector<TrainingTriplet>& held_out) {
  std::map<std::string, std::pair<std::vector<const TrainingTriplet*>, std::vector<const TrainingTriplet*>>> by_anchor;
  std::vector<std::string> order;
  for (const TrainingTriplet& t : held_out) {
    auto [it, inserted] = by_anchor.try_emplace(t.anchor_id);
    if (inserted) order.push_back(t.anchor_id);
    (t.kind == PairKind::positive ? it->second.first : it->second.second).push_back(&t);
  }
  std::vector<ProbeItem> probe;
  for (const std::string& anchor : order) {
    const auto& [pos, neg] = by_anchor[anchor];
    for (const TrainingTriplet* p : pos) {
      for (const TrainingTriplet* n : neg) {
        if (p->target > n->target) probe.push_back({anchor, p->other_id, n->other_id});
      }
    }
  }
  return probe;
}

namespace {

/// Normalized transformed vectors, computed once per id.
class TransformCache {
 public:
  TransformCache(const TransformParams& params, const EmbeddingSet& embeds) : params_(params), embeds_(embeds) {}

  const std::vector<double>& get(const std::string& id) {
    auto it = cache_.find(id);
    if (it == cache_.end()) it = cache_.emplace(id, transform_normalized(params_, embeds_.at(id))).first;
    return it->second;
  }

 private:
  const TransformParams& params_;
  const EmbeddingSet& embeds_;
  std::unordered_map<std::string, std::vector<double>> cache_;
};

double unit_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) return 0.0;
  return std::clamp(kernels::dot(a, b), -1.0, 1.0);
}

class Adam {
 public:
  Adam(const TrainConfig& cfg, const TransformParams& shape)
      : cfg_(cfg), m_(TransformParams::zeros(shape.input_dim(), shape.hidden_dim(), shape.output_dim())), v_(m_) {}

  void step(TransformParams& params, const ParamGradient& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    update(params.hidden.weights, grad.hidden.weights, m_.hidden.weights, v_.hidden.weights, bc1, bc2);
    update(params.hidden.bias, grad.hidden.bias, m_.hidden.bias, v_.hidden.bias, bc1, bc2);
    update(params.output.weights, grad.output.weights, m_.output.weights, v_.output.weights, bc1, bc2);
    update(params.output.bias, grad.output.bias, m_.output.bias, v_.output.bias, bc1, bc2);
  }

 private:
  void update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
              double bc1, double bc2) const {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }

  const TrainConfig& cfg_;
  TransformParams m_;
  TransformParams v_;
  std::size_t t_ = 0;
};

void zero(ParamGradient& g) {
  for (auto* vec : {&g.hidden.weights, &g.hidden.bias, &g.output.weights, &g.output.bias}) {
    std::fill(vec->begin(), vec->end(), 0.0);
  }
}

void scale(ParamGradient& g, double s) {
  for (auto* vec : {&g.hidden.weights, &g.hidden.bias, &g.output.weights, &g.output.bias}) {
    for (double& x : *vec) x *= s;
  }
}

}  // namespace

double probe_accuracy(const TransformParams& params, const std::vector<ProbeItem>& probe, const EmbeddingSet& embeds) {
  if (probe.empty()) return 0.0;
  TransformCache cache(params, embeds);
  std::size_t correct = 0;
  for (const ProbeItem& item : probe) {
    const auto& a = cache.get(item.anchor_id);
    if (unit_cosine(a, cache.get(item.pos_id)) > unit_cosine(a, cache.get(item.neg_id))) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probe.size());
}

TrainResult train(const std::vector<TrainingTriplet>& triplets, const EmbeddingSet& embeds, const TrainConfig& cfg) {
  cfg.validate();
  if (triplets.empty()) throw DataError("no training triplets");
  for (const TrainingTriplet& t : triplets) {
    if (!embeds.contains(t.anchor_id) || !embeds.contains(t.other_id)) {
      throw DataError("triplet (" + t.anchor_id + ", " + t.other_id + ") has no embedding");
    }
  }

  Rng rng(cfg.seed);
  TrainResult result;
  TrainReport& report = result.report;

  // Hold out a fraction of anchors for the ranking probe.
  std::vector<std::string> anchors;
  {
    std::set<std::string> seen;
    for (const TrainingTriplet& t : triplets) {
      if (seen.insert(t.anchor_id).second) anchors.push_back(t.anchor_id);
    }
  }
  std::set<std::string> held_anchors;
  const auto n_held = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(anchors.size())));
  if (n_held > 0 && n_held < anchors.size()) {
    rng.shuffle(std::span<std::string>(anchors));
    held_anchors.insert(anchors.begin(), anchors.begin() + static_cast<std::ptrdiff_t>(n_held));
  }
  std::vector<TrainingTriplet> train_set, held_out;
  for (const TrainingTriplet& t : triplets) (held_anchors.contains(t.anchor_id) ? held_out : train_set).push_back(t);
  train_set = deduplicate_pairs(train_set);
  const std::vector<ProbeItem> probe = build_probe(held_out);
  report.probe_size = probe.size();
  report.train_pairs = train_set.size();
  if (probe.empty()) report.warnings.push_back("empty validation probe; early stopping on training loss");

  TransformParams params = TransformParams::initialize(embeds.dim(), cfg.hidden_dim, cfg.output_dim, rng.next());
  TransformParams best = params;
  double best_score = -1.0;
  std::size_t since_best = 0;
  Adam adam(cfg, params);
  ParamGradient grad = TransformParams::zeros(params.input_dim(), params.hidden_dim(), params.output_dim());

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      zero(grad);
      for (std::size_t k = start; k < end; ++k) {
        const TrainingTriplet& t = train_set[order[k]];
        const auto v1 = embeds.at(t.anchor_id);
        const auto v2 = embeds.at(t.other_id);
        PairLoss pl;
        if (cfg.dropout_rate > 0.0) {
          const DropoutMask m1 = DropoutMask::sample(v1.size(), cfg.dropout_rate, rng);
          const DropoutMask m2 = DropoutMask::sample(v2.size(), cfg.dropout_rate, rng);
          pl = accumulate_gradient(params, v1, v2, t.target, &m1, &m2, cfg.loss, grad);
        } else {
          pl = accumulate_gradient(params, v1, v2, t.target, nullptr, nullptr, cfg.loss, grad);
        }
        if (!std::isfinite(pl.loss)) {
          std::ostringstream msg;
          msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index
              << " (learning rate " << cfg.learning_rate << ")";
          throw TrainingError(msg.str());
        }
        if (pl.degenerate) ++report.degenerate_outputs;
        loss_sum += pl.loss;
      }
      scale(grad, 1.0 / static_cast<double>(end - start));
      adam.step(params, grad);
    }
    const double epoch_loss = loss_sum / static_cast<double>(order.size());
    report.train_loss.push_back(epoch_loss);
    report.stopped_epoch = epoch;

    // Higher is better for both criteria.
    double score = 0.0;
    if (!probe.empty()) {
      score = probe_accuracy(params, probe, embeds);
      report.probe_accuracy.push_back(score);
    } else {
      score = -epoch_loss;
    }
    if (epoch == 1 || score > best_score) {
      best_score = score;
      best = params;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
    if (epoch_loss <= cfg.loss_tolerance) break;
  }
  best.validate();
  report.params_digest = best.digest();
  result.params = std::move(best);
  return result;
}

}  // namespace tstr
