#include "docclf/cli/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <sstream>

namespace docclf::cli {

namespace {

Config mbconv(int kernel, int channels, int repeats, int stride, int expansion) {
  return {{"kind", "mbconv"}, {"kernel", kernel},       {"channels", channels}, {"repeats", repeats},
          {"stride", stride}, {"expansion", expansion}, {"se_ratio", 0.25}};
}

Config stage_defaults(int epochs, double base_lr, int batch, const char *optimizer) {
  return {{"epochs", epochs},
          {"max_steps", 0},
          {"batch_per_worker", batch},
          {"optimizer", optimizer},
          {"momentum", 0.9},
          {"weight_decay", std::string(optimizer) == "adam" ? 0.01 : 0.0},
          {"beta1", 0.9},
          {"beta2", 0.999},
          {"epsilon", 1e-8},
          {"schedule", "stlr"},
          {"base_lr", base_lr},
          {"cut_frac", 0.1},
          {"ratio", 32.0},
          {"val_fraction", 0.2},
          {"precision", "float"},
          {"augment", {{"enabled", true}, {"shear_min", -5.0}, {"shear_max", 5.0}}},
          {"layerwise", {{"enabled", false}, {"eta_top", 1e-6}, {"eta_body", 3e-5}, {"xi", 0.95}}}};
}

Config from_yaml(const YAML::Node &node) {
  switch (node.Type()) {
  case YAML::NodeType::Null:
  case YAML::NodeType::Undefined:
    return nullptr;
  case YAML::NodeType::Sequence: {
    Config out = Config::array();
    for (const auto &item : node) out.push_back(from_yaml(item));
    return out;
  }
  case YAML::NodeType::Map: {
    Config out = Config::object();
    for (const auto &kv : node) out[kv.first.as<std::string>()] = from_yaml(kv.second);
    return out;
  }
  case YAML::NodeType::Scalar:
    break;
  }
  const std::string s = node.Scalar();
  // Quoted scalars carry the "!" tag and stay strings.
  if (node.Tag() == "!") return s;
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  if (s == "~" || s == "null") return nullptr;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception &) {
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception &) {
  }
  return s;
}

template <typename T>
T get(const Config &cfg, const std::string &path) {
  const auto &node = at_path(cfg, path);
  try {
    return node.get<T>();
  } catch (const nlohmann::json::exception &) {
    throw CliError("config", "'" + path + "' has the wrong type (" + node.dump() + ")");
  }
}

} // namespace

Config default_config() {
  Config stages = Config::array({mbconv(3, 8, 1, 1, 1), mbconv(3, 16, 1, 2, 6)});
  Config image = {{"in_channels", 1},
                  {"stem_channels", 8},
                  {"stem_kernel", 3},
                  {"stem_stride", 2},
                  {"head_channels", 32},
                  {"stages", stages},
                  {"norm", "batch"},
                  {"channel_divisor", 8},
                  {"dropout", 0.0},
                  {"base_input_size", 32},
                  {"scaling",
                   {{"alpha", 1.2}, {"beta", 1.1}, {"gamma", 1.15}, {"phi", 0.0}, {"binding", "depth_alpha"},
                    {"tolerance", 0.05}}}};
  Config text = {{"num_layers", 2}, {"hidden", 64},  {"heads", 4},         {"intermediate", 0},
                 {"vocab_size", 128}, {"max_len", 32}, {"dropout", 0.2}, {"activation", "gelu"}};

  Config text_stage = stage_defaults(5, 0.0, 6, "adam");
  text_stage["schedule"] = "stlr";
  text_stage["augment"]["enabled"] = false;
  text_stage["layerwise"] = {{"enabled", true}, {"eta_top", 1e-3}, {"eta_body", 1e-3}, {"xi", 0.95}};

  return {{"seed", 1},
          {"corpus",
           {{"num_classes", 4},
            {"docs_per_class", 60},
            {"image_size", 32},
            {"vocab_size", 128},
            {"text_len", 24},
            {"image_noise", 0.1},
            {"text_noise", 0.1},
            {"agreement", 1.0},
            {"image_drop", 0.0},
            {"text_drop", 0.0},
            {"template_seed", 1}}},
          {"model", {{"image", image}, {"text", text}}},
          {"train",
           {{"pretrain", stage_defaults(20, 1.6, 16, "sgd")},
            {"finetune", stage_defaults(5, 0.8, 16, "sgd")},
            {"text", text_stage}}},
          {"parallel", {{"workers", 1}, {"reduction", "ring"}, {"deterministic", true}, {"debug_checks", false}}},
          {"splits", {{"n_splits", 10}, {"train_size", 64}, {"val_size", 16}, {"per_class_quota", 20}}},
          {"ensemble", {{"w1", 0.5}, {"w2", 0.5}, {"grid_step", 0.0}, {"reducer", "median"}}},
          {"bench", {{"k_list", Config::array({1, 2, 4})}, {"steps", 10}, {"warmup", 1}, {"mode", "weak"}}}};
}

Config parse_yaml(const std::string &text) {
  try {
    return from_yaml(YAML::Load(text));
  } catch (const YAML::Exception &e) {
    throw CliError("config", std::string("YAML parse error: ") + e.what());
  }
}

Config load_yaml(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw CliError("io", "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Config cfg = parse_yaml(ss.str());
  if (cfg.is_null()) return Config::object();
  if (!cfg.is_object()) throw CliError("config", path.string() + ": top level must be a mapping");
  return cfg;
}

void merge_config(Config &base, const Config &overlay, const std::string &where) {
  if (!overlay.is_object()) throw CliError("config", "'" + where + "' must be a mapping");
  for (const auto &[key, value] : overlay.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw CliError("config", "unknown key '" + path + "'");
    auto &slot = base[key];
    if (slot.is_object() && value.is_object())
      merge_config(slot, value, path);
    else if (slot.is_object())
      throw CliError("config", "'" + path + "' must be a mapping");
    else
      slot = value;
  }
}

void apply_override(Config &cfg, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw CliError("usage", "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  Config value = parse_yaml(assignment.substr(eq + 1));
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (key.back() == '.') parts.emplace_back();
  Config overlay = std::move(value);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw CliError("usage", "override key '" + key + "' has an empty component");
    overlay = Config{{*it, std::move(overlay)}};
  }
  merge_config(cfg, overlay);
}

Config load_layered(const std::vector<std::filesystem::path> &files, const std::vector<std::string> &overrides) {
  Config cfg = default_config();
  for (const auto &f : files) merge_config(cfg, load_yaml(f));
  for (const auto &o : overrides) apply_override(cfg, o);
  return cfg;
}

const Config &at_path(const Config &cfg, const std::string &path) {
  const Config *node = &cfg;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw CliError("config", "missing key '" + path + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return *node;
}

CorpusSpec corpus_spec(const Config &cfg) {
  try {
    return corpus_spec_from_json(at_path(cfg, "corpus"));
  } catch (const CliError &) {
    throw;
  } catch (const std::exception &e) {
    throw CliError("config", e.what());
  }
}

ScalingSpec scaling_spec(const Config &cfg) {
  ScalingSpec spec;
  spec.alpha = get<double>(cfg, "model.image.scaling.alpha");
  spec.beta = get<double>(cfg, "model.image.scaling.beta");
  spec.gamma = get<double>(cfg, "model.image.scaling.gamma");
  spec.phi = get<double>(cfg, "model.image.scaling.phi");
  spec.tolerance = get<double>(cfg, "model.image.scaling.tolerance");
  try {
    spec.binding = parse_scaling_binding(get<std::string>(cfg, "model.image.scaling.binding"));
    spec.validate();
  } catch (const CliError &) {
    throw;
  } catch (const std::exception &e) {
    throw CliError("config", std::string("model.image.scaling: ") + e.what());
  }
  return spec;
}

EfficientNetConfig image_model_config(const Config &cfg, int num_classes) {
  Config j = at_path(cfg, "model.image");
  const int base = get<int>(cfg, "model.image.base_input_size");
  const ScaledDims dims = [&] {
    try {
      return compound_scale(scaling_spec(cfg), base);
    } catch (const CliError &) {
      throw;
    } catch (const std::exception &e) {
      throw CliError("config", std::string("model.image.scaling: ") + e.what());
    }
  }();
  j.erase("scaling");
  j.erase("base_input_size");
  j["num_classes"] = num_classes;
  j["input_size"] = base;
  try {
    return efficientnet_config_from_json(j).scaled(dims);
  } catch (const std::exception &e) {
    throw CliError("config", std::string("model.image: ") + e.what());
  }
}

TextEncoderConfig text_model_config(const Config &cfg, int num_classes) {
  Config j = at_path(cfg, "model.text");
  j["num_classes"] = num_classes;
  try {
    return text_encoder_config_from_json(j);
  } catch (const std::exception &e) {
    throw CliError("config", std::string("model.text: ") + e.what());
  }
}

SplitProtocol split_protocol(const Config &cfg) {
  SplitProtocol p;
  p.n_splits = get<int>(cfg, "splits.n_splits");
  p.train_size = get<int>(cfg, "splits.train_size");
  p.val_size = get<int>(cfg, "splits.val_size");
  p.per_class_quota = get<int>(cfg, "splits.per_class_quota");
  p.seed = get<std::uint64_t>(cfg, "seed");
  return p;
}

ParallelConfig parallel_config(const Config &cfg, const std::string &stage) {
  ParallelConfig p;
  p.workers = get<int>(cfg, "parallel.workers");
  p.batch_per_worker = get<int>(cfg, "train." + stage + ".batch_per_worker");
  p.seed = get<std::uint64_t>(cfg, "seed");
  const auto reduction = get<std::string>(cfg, "parallel.reduction");
  if (reduction == "ring")
    p.reduction = Reduction::ring;
  else if (reduction == "naive")
    p.reduction = Reduction::naive;
  else
    throw CliError("config", "parallel.reduction must be ring or naive, got '" + reduction + "'");
  p.deterministic = get<bool>(cfg, "parallel.deterministic");
  p.debug_checks = get<bool>(cfg, "parallel.debug_checks");
  try {
    p.validate();
  } catch (const std::exception &e) {
    throw CliError("config", std::string("parallel: ") + e.what());
  }
  return p;
}

StageSettings stage_settings(const Config &cfg, const std::string &stage) {
  const std::string root = "train." + stage + ".";
  StageSettings s;
  auto &t = s.train;
  t.epochs = get<int>(cfg, root + "epochs");
  t.max_steps = get<long>(cfg, root + "max_steps");
  const auto optimizer = get<std::string>(cfg, root + "optimizer");
  if (optimizer == "sgd")
    t.optimizer = OptimizerKind::sgd;
  else if (optimizer == "adam")
    t.optimizer = OptimizerKind::adam;
  else
    throw CliError("config", root + "optimizer must be sgd or adam, got '" + optimizer + "'");
  t.sgd.momentum = get<double>(cfg, root + "momentum");
  t.sgd.weight_decay = get<double>(cfg, root + "weight_decay");
  t.adam.beta1 = get<double>(cfg, root + "beta1");
  t.adam.beta2 = get<double>(cfg, root + "beta2");
  t.adam.epsilon = get<double>(cfg, root + "epsilon");
  t.adam.weight_decay = get<double>(cfg, root + "weight_decay");
  const auto schedule = get<std::string>(cfg, root + "schedule");
  if (schedule == "stlr")
    t.schedule = ScheduleKind::stlr;
  else if (schedule == "constant")
    t.schedule = ScheduleKind::constant;
  else
    throw CliError("config", root + "schedule must be stlr or constant, got '" + schedule + "'");
  t.cut_frac = get<double>(cfg, root + "cut_frac");
  t.ratio = get<double>(cfg, root + "ratio");
  s.base_lr = get<double>(cfg, root + "base_lr");
  s.val_fraction = get<double>(cfg, root + "val_fraction");
  if (!(s.val_fraction >= 0.0 && s.val_fraction < 1.0))
    throw CliError("config", root + "val_fraction must lie in [0, 1)");
  s.augment.enabled = get<bool>(cfg, root + "augment.enabled");
  s.augment.shear_min = get<double>(cfg, root + "augment.shear_min");
  s.augment.shear_max = get<double>(cfg, root + "augment.shear_max");
  s.layerwise = get<bool>(cfg, root + "layerwise.enabled");
  s.decay.eta_top = get<double>(cfg, root + "layerwise.eta_top");
  s.decay.eta_body = get<double>(cfg, root + "layerwise.eta_body");
  s.decay.xi = get<double>(cfg, root + "layerwise.xi");
  if (!(s.decay.xi > 0.0)) throw CliError("config", root + "layerwise.xi must be > 0");
  s.precision = get<std::string>(cfg, root + "precision");
  if (s.precision != "float" && s.precision != "double")
    throw CliError("config", root + "precision must be float or double");
  try {
    s.augment.validate();
    t.validate();
  } catch (const std::exception &e) {
    throw CliError("config", root.substr(0, root.size() - 1) + ": " + e.what());
  }
  return s;
}

FusionWeights fusion_weights(const Config &cfg) {
  FusionWeights w{get<double>(cfg, "ensemble.w1"), get<double>(cfg, "ensemble.w2")};
  try {
    w.validate();
  } catch (const std::exception &e) {
    throw CliError("config", std::string("ensemble: ") + e.what());
  }
  return w;
}

} // namespace docclf::cli
