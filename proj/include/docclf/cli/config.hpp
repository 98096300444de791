#ifndef DOCCLF_CLI_CONFIG_HPP
#define DOCCLF_CLI_CONFIG_HPP

// Layered run configuration. Files are YAML; the merged tree is kept as JSON
// so it can be snapshotted verbatim into manifests and checkpoints.

#include "docclf/data/corpus.hpp"
#include "docclf/data/image.hpp"
#include "docclf/data/splits.hpp"
#include "docclf/eval/ensemble.hpp"
#include "docclf/model/efficientnet.hpp"
#include "docclf/model/text_encoder.hpp"
#include "docclf/optim/schedule.hpp"
#include "docclf/parallel/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace docclf::cli {

using Config = nlohmann::json;

/// Error carrying the short machine-readable code printed by the CLI.
class CliError : public std::runtime_error {
public:
  CliError(std::string code, const std::string &msg) : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string &code() const { return code_; }

private:
  std::string code_;
};

/// Built-in desk profile; every key a config file may set appears here.
Config default_config();

Config parse_yaml(const std::string &text);
Config load_yaml(const std::filesystem::path &path);

/// Recursively overlays `overlay` onto `base`. Objects merge key by key;
/// anything else replaces. Keys unknown to `base` are rejected.
void merge_config(Config &base, const Config &overlay, const std::string &where = "");

/// Applies "a.b.c=value"; the value is read as a YAML scalar or flow node.
void apply_override(Config &cfg, const std::string &assignment);

/// Defaults, then each file in order, then each override in order.
Config load_layered(const std::vector<std::filesystem::path> &files, const std::vector<std::string> &overrides);

/// Value at a dotted path; throws CliError("config", ...) when missing.
const Config &at_path(const Config &cfg, const std::string &path);

CorpusSpec corpus_spec(const Config &cfg);
ScalingSpec scaling_spec(const Config &cfg);
/// Image network with compound scaling applied and `num_classes` set.
EfficientNetConfig image_model_config(const Config &cfg, int num_classes);
TextEncoderConfig text_model_config(const Config &cfg, int num_classes);
SplitProtocol split_protocol(const Config &cfg);

/// Worker count and reduction from `parallel`, batch from `train.<stage>`.
ParallelConfig parallel_config(const Config &cfg, const std::string &stage);

/// One training stage: pretrain, finetune or text.
struct StageSettings {
  TrainConfig train;
  /// Base of the linear scaling rule; ignored when layer-wise rates are on.
  double base_lr = 0.0;
  double val_fraction = 0.2;
  AugmentConfig augment;
  bool layerwise = false;
  LayerwiseDecayConfig decay;
  std::string precision = "float";
};

StageSettings stage_settings(const Config &cfg, const std::string &stage);

FusionWeights fusion_weights(const Config &cfg);

} // namespace docclf::cli

#endif // DOCCLF_CLI_CONFIG_HPP
