#include "docclf/model/efficientnet.hpp"

#include <stdexcept>

namespace docclf {

void StageSpec::validate() const {
  if (repeats < 1) throw std::invalid_argument("stage repeats must be >= 1");
  if (stride != 1 && stride != 2) throw std::invalid_argument("stage stride must be 1 or 2");
  if (expansion < 1) throw std::invalid_argument("stage expansion must be >= 1");
  if (kernel < 1) throw std::invalid_argument("stage kernel must be >= 1");
  if (channels < 1) throw std::invalid_argument("stage channels must be >= 1");
  if (se_ratio < 0.0 || se_ratio > 1.0) throw std::invalid_argument("se_ratio must lie in [0, 1]");
}

void EfficientNetConfig::validate() const {
  if (stages.empty()) throw std::invalid_argument("efficientnet: stage list is empty");
  for (const auto &s : stages) s.validate();
  if (in_channels < 1 || stem_channels < 1 || head_channels < 1)
    throw std::invalid_argument("efficientnet: channel counts must be positive");
  if (num_classes < 1) throw std::invalid_argument("efficientnet: num_classes must be >= 1");
  if (input_size < 1) throw std::invalid_argument("efficientnet: input_size must be positive");
  if (channel_divisor < 1) throw std::invalid_argument("efficientnet: channel_divisor must be positive");
  if (width_mult <= 0.0 || depth_mult <= 0.0) throw std::invalid_argument("efficientnet: multipliers must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("efficientnet: dropout must lie in [0, 1)");
}

EfficientNetConfig EfficientNetConfig::scaled(const ScaledDims &dims) const {
  EfficientNetConfig out = *this;
  out.width_mult = dims.width_mult;
  out.depth_mult = dims.depth_mult;
  out.input_size = dims.input_size;
  return out;
}

std::vector<StageSpec> canonical_b0_stages() {
  const auto mb = [](int kernel, int channels, int repeats, int stride, int expansion) {
    return StageSpec{StageKind::mbconv, kernel, channels, repeats, stride, expansion, 0.25};
  };
  return {mb(3, 16, 1, 1, 1), mb(3, 24, 2, 2, 6),  mb(5, 40, 2, 2, 6), mb(3, 80, 3, 2, 6),
          mb(5, 112, 3, 1, 6), mb(5, 192, 4, 2, 6), mb(3, 320, 1, 1, 6)};
}

EfficientNetConfig b0_config(int num_classes, int in_channels) {
  EfficientNetConfig cfg;
  cfg.in_channels = in_channels;
  cfg.stem_channels = 32;
  cfg.head_channels = 1280;
  cfg.stages = canonical_b0_stages();
  cfg.num_classes = num_classes;
  cfg.norm = NormKind::batch;
  cfg.dropout = 0.2;
  cfg.input_size = 224;
  return cfg;
}

MBConvLayout build_mbconv(int in_channels, int out_channels, int expansion, int kernel, int stride,
                          double se_ratio) {
  if (in_channels <= 0 || out_channels <= 0) throw std::invalid_argument("mbconv: channel counts must be positive");
  if (expansion < 1) throw std::invalid_argument("mbconv: expansion must be >= 1");
  if (stride < 1) throw std::invalid_argument("mbconv: stride must be positive");
  MBConvLayout l;
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  l.expanded_channels = in_channels * expansion;
  l.kernel = kernel;
  l.stride = stride;
  l.has_expand = expansion > 1;
  l.se_channels = se_ratio > 0.0 ? std::max(1, static_cast<int>(in_channels * se_ratio)) : 0;
  l.residual = stride == 1 && in_channels == out_channels;
  return l;
}

std::string to_string(NormKind kind) { return kind == NormKind::batch ? "batch" : "none"; }

NormKind parse_norm_kind(const std::string &name) {
  if (name == "batch") return NormKind::batch;
  if (name == "none") return NormKind::none;
  throw std::invalid_argument("unknown norm kind '" + name + "'");
}

StageKind parse_stage_kind(const std::string &name) {
  if (name == "mbconv") return StageKind::mbconv;
  if (name == "conv") return StageKind::conv;
  throw std::invalid_argument("unknown stage kind '" + name + "'");
}

nlohmann::json to_json(const EfficientNetConfig &cfg) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto &s : cfg.stages) {
    stages.push_back({{"kind", s.kind == StageKind::conv ? "conv" : "mbconv"},
                      {"kernel", s.kernel},
                      {"channels", s.channels},
                      {"repeats", s.repeats},
                      {"stride", s.stride},
                      {"expansion", s.expansion},
                      {"se_ratio", s.se_ratio}});
  }
  return {{"in_channels", cfg.in_channels},     {"stem_channels", cfg.stem_channels},
          {"stem_kernel", cfg.stem_kernel},     {"stem_stride", cfg.stem_stride},
          {"head_channels", cfg.head_channels}, {"stages", stages},
          {"num_classes", cfg.num_classes},     {"norm", to_string(cfg.norm)},
          {"channel_divisor", cfg.channel_divisor}, {"dropout", cfg.dropout},
          {"width_mult", cfg.width_mult},       {"depth_mult", cfg.depth_mult},
          {"input_size", cfg.input_size}};
}

EfficientNetConfig efficientnet_config_from_json(const nlohmann::json &j) {
  EfficientNetConfig cfg;
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.stem_channels = j.at("stem_channels").get<int>();
  cfg.stem_kernel = j.value("stem_kernel", 3);
  cfg.stem_stride = j.value("stem_stride", 2);
  cfg.head_channels = j.at("head_channels").get<int>();
  for (const auto &s : j.at("stages")) {
    StageSpec st;
    st.kind = parse_stage_kind(s.value("kind", "mbconv"));
    st.kernel = s.at("kernel").get<int>();
    st.channels = s.at("channels").get<int>();
    st.repeats = s.at("repeats").get<int>();
    st.stride = s.at("stride").get<int>();
    st.expansion = s.value("expansion", 1);
    st.se_ratio = s.value("se_ratio", 0.25);
    cfg.stages.push_back(st);
  }
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.norm = parse_norm_kind(j.value("norm", "batch"));
  cfg.channel_divisor = j.value("channel_divisor", 8);
  cfg.dropout = j.value("dropout", 0.0);
  cfg.width_mult = j.value("width_mult", 1.0);
  cfg.depth_mult = j.value("depth_mult", 1.0);
  cfg.input_size = j.at("input_size").get<int>();
  cfg.validate();
  return cfg;
}

} // namespace docclf
