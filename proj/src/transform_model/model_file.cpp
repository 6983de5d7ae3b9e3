#include <json.hpp>

#include "tstr/error.hpp"
#include "tstr/io.hpp"
#include "tstr/transform_model.hpp"

namespace tstr {

using nlohmann::json;

namespace {

json layer_json(const DenseLayer& l) {
  return json{{"rows", l.out}, {"cols", l.in}, {"w", l.weights}, {"b", l.bias}};
}

DenseLayer layer_from(const json& j) {
  DenseLayer l;
  l.out = j.at("rows").get<std::size_t>();
  l.in = j.at("cols").get<std::size_t>();
  l.weights = j.at("w").get<std::vector<double>>();
  l.bias = j.at("b").get<std::vector<double>>();
  return l;
}

json config_json(const TrainConfig& c) {
  return json{{"hidden_dim", c.hidden_dim},
              {"output_dim", c.output_dim},
              {"dropout_rate", c.dropout_rate},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"epsilon", c.epsilon},
              {"seed", c.seed},
              {"early_stop_patience", c.early_stop_patience},
              {"validation_fraction", c.validation_fraction},
              {"loss", c.loss == LossKind::squared ? "squared" : "absolute"},
              {"loss_tolerance", c.loss_tolerance}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.output_dim = j.value("output_dim", c.output_dim);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.seed = j.value("seed", c.seed);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.loss = j.value("loss", std::string("squared")) == "absolute" ? LossKind::absolute : LossKind::squared;
  c.loss_tolerance = j.value("loss_tolerance", c.loss_tolerance);
  return c;
}

}  // namespace

std::string ModelFile::serialize() const {
  json j{{"format", "tstr.model"},
         {"format_version", 1},
         {"dims", {{"d", params.input_dim()}, {"h", params.hidden_dim()}, {"d_out", params.output_dim()}}},
         {"activation", "tanh"},
         {"layers", json::array({layer_json(params.hidden), layer_json(params.output)})},
         {"train_config", config_json(config)},
         {"corpus_digest", corpus_digest},
         {"provider_tag", provider_tag},
         {"embeddings_digest", embeddings_digest},
         {"triplets_digest", triplets_digest},
         {"params_digest", params.digest()},
         {"final_probe_accuracy", final_probe_accuracy}};
  return j.dump() + "\n";
}

ModelFile ModelFile::parse(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  if (j.value("format", "") != "tstr.model") throw DataError("model file: wrong format tag");
  if (j.value("format_version", 0) != 1) throw DataError("model file: unsupported format_version");
  if (j.value("activation", "") != "tanh") throw DataError("model file: unsupported activation");
  const json& layers = j.at("layers");
  if (!layers.is_array() || layers.size() != 2) throw DataError("model file: expected two layers");
  ModelFile m;
  m.params.hidden = layer_from(layers[0]);
  m.params.output = layer_from(layers[1]);
  m.params.validate();
  const json& dims = j.at("dims");
  if (dims.at("d").get<std::size_t>() != m.params.input_dim() ||
      dims.at("h").get<std::size_t>() != m.params.hidden_dim() ||
      dims.at("d_out").get<std::size_t>() != m.params.output_dim()) {
    throw DataError("model file: dims do not match layer shapes");
  }
  m.config = config_from(j.at("train_config"));
  m.corpus_digest = j.value("corpus_digest", "");
  m.provider_tag = j.value("provider_tag", "");
  m.embeddings_digest = j.value("embeddings_digest", "");
  m.triplets_digest = j.value("triplets_digest", "");
  m.final_probe_accuracy = j.value("final_probe_accuracy", 0.0);
  if (j.contains("params_digest") && j["params_digest"].get<std::string>() != m.params.digest()) {
    throw DataError("model file: params digest mismatch (file corrupted?)");
  }
  return m;
}

void ModelFile::save(const std::filesystem::path& path) const { io::write_file_atomic(path, serialize()); }
ModelFile ModelFile::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

}  // namespace tstr
