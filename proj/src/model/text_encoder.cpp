#include "docclf/model/text_encoder.hpp"

#include <stdexcept>

namespace docclf {

void TextEncoderConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("text encoder: num_layers must be >= 1");
  if (hidden < 1 || heads < 1) throw std::invalid_argument("text encoder: hidden and heads must be positive");
  if (hidden % heads != 0) {
    throw std::invalid_argument("text encoder: hidden " + std::to_string(hidden) + " is not divisible by heads " +
                                std::to_string(heads));
  }
  if (intermediate < 0) throw std::invalid_argument("text encoder: intermediate must be >= 0");
  if (vocab_size < 5) throw std::invalid_argument("text encoder: vocab_size must cover the special tokens");
  if (max_len < 2) throw std::invalid_argument("text encoder: max_len must be >= 2");
  if (num_classes < 1) throw std::invalid_argument("text encoder: num_classes must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("text encoder: dropout must lie in [0, 1)");
}

std::string to_string(Activation a) {
  switch (a) {
  case Activation::relu: return "relu";
  case Activation::swish: return "swish";
  case Activation::gelu: break;
  }
  return "gelu";
}

Activation parse_activation(const std::string &name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  if (name == "swish") return Activation::swish;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

nlohmann::json to_json(const TextEncoderConfig &cfg) {
  return {{"num_layers", cfg.num_layers},   {"hidden", cfg.hidden},         {"heads", cfg.heads},
          {"intermediate", cfg.intermediate}, {"vocab_size", cfg.vocab_size}, {"max_len", cfg.max_len},
          {"num_classes", cfg.num_classes}, {"dropout", cfg.dropout},       {"activation", to_string(cfg.activation)}};
}

TextEncoderConfig text_encoder_config_from_json(const nlohmann::json &j) {
  TextEncoderConfig cfg;
  cfg.num_layers = j.at("num_layers").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.intermediate = j.value("intermediate", 0);
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.dropout = j.value("dropout", 0.0);
  cfg.activation = parse_activation(j.value("activation", "gelu"));
  cfg.validate();
  return cfg;
}

} // namespace docclf
