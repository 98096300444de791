#ifndef DOCCLF_MODEL_EFFICIENTNET_HPP
#define DOCCLF_MODEL_EFFICIENTNET_HPP

#include "docclf/model/network.hpp"
#include "docclf/model/scaling.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace docclf {

enum class StageKind { conv, mbconv };
enum class NormKind { batch, none };

struct StageSpec {
  StageKind kind = StageKind::mbconv;
  int kernel = 3;
  int channels = 16;
  int repeats = 1;
  int stride = 1;
  int expansion = 1;
  double se_ratio = 0.25;

  void validate() const;
};

struct EfficientNetConfig {
  int in_channels = 1;
  int stem_channels = 32;
  int stem_kernel = 3;
  int stem_stride = 2;
  /// Pre-pooling 1x1 conv width before width scaling.
  int head_channels = 1280;
  std::vector<StageSpec> stages;
  int num_classes = 16;
  NormKind norm = NormKind::batch;
  int channel_divisor = 8;
  double dropout = 0.0;
  double width_mult = 1.0;
  double depth_mult = 1.0;
  int input_size = 224;

  void validate() const;
  /// Copy with width/depth/input size taken from compound scaling.
  EfficientNetConfig scaled(const ScaledDims &dims) const;
};

/// The B0 stage table: seven MBConv stages after a 32-channel stem.
std::vector<StageSpec> canonical_b0_stages();
EfficientNetConfig b0_config(int num_classes, int in_channels = 3);

/// Structural description of one mobile inverted bottleneck block.
struct MBConvLayout {
  int in_channels = 0;
  int out_channels = 0;
  int expanded_channels = 0;
  int kernel = 3;
  int stride = 1;
  /// Squeeze-excitation bottleneck width; 0 means no SE.
  int se_channels = 0;
  bool has_expand = false;
  bool residual = false;
};

/// expand 1x1 (skipped at expansion 1) -> depthwise FxF same -> SE -> project
/// 1x1; the identity shortcut exists iff stride == 1 and in == out.
MBConvLayout build_mbconv(int in_channels, int out_channels, int expansion, int kernel, int stride,
                          double se_ratio);

nlohmann::json to_json(const EfficientNetConfig &cfg);
EfficientNetConfig efficientnet_config_from_json(const nlohmann::json &j);
std::string to_string(NormKind kind);
NormKind parse_norm_kind(const std::string &name);
StageKind parse_stage_kind(const std::string &name);

/// Compound-scaled convolutional image classifier. Parameter groups are
/// "stem", "stage<i>" per stage, "top" (the pre-pooling conv) and "head"
/// (the final fully connected layer).
template <typename Scalar_>
class EfficientNet {
public:
  using Scalar = Scalar_;

  EfficientNet(EfficientNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
    build();
  }

  const EfficientNetConfig &config() const { return cfg_; }
  NetworkGraph<Scalar> &network() { return net_; }
  const NetworkGraph<Scalar> &network() const { return net_; }
  const std::vector<MBConvLayout> &blocks() const { return layouts_; }

  /// images [N, in_channels, S, S] -> logits [N, num_classes].
  Var<Scalar> forward(Graph<Scalar> &g, const Var<Scalar> &images) {
    if (images->value.rank() != 4 || images->dim(1) != cfg_.in_channels) {
      throw DimensionError("efficientnet: expected [N," + std::to_string(cfg_.in_channels) +
                           ",H,W] input, got " + to_string(images->shape()));
    }
    const auto p = bind_parameters(g, net_);
    Var<Scalar> x = images;
    for (const auto &unit : stem_) x = apply(p, unit, x);
    for (const auto &block : blocks_) {
      Var<Scalar> h = x;
      if (block.expand) h = apply(p, *block.expand, h);
      h = apply(p, block.depthwise, h);
      if (block.se) {
        auto s = global_avg_pool(h);
        s = swish(linear(s, p[block.se->reduce_w], p[block.se->reduce_b]));
        s = sigmoid(linear(s, p[block.se->expand_w], p[block.se->expand_b]));
        h = scale_channels(h, s);
      }
      h = apply(p, block.project, h);
      x = block.layout.residual ? add(h, x) : h;
    }
    x = apply(p, top_, x);
    x = dropout(global_avg_pool(x), cfg_.dropout);
    return linear(x, p[fc_weight_], p[fc_bias_]);
  }

  Var<Scalar> logits(Graph<Scalar> &g, const Tensor<Scalar> &images) { return forward(g, g.constant(images)); }

  /// P(class | FC) per row, evaluated in inference mode.
  Tensor<Scalar> predict_proba(const Tensor<Scalar> &images) {
    Graph<Scalar> g(false);
    return softmax(logits(g, images))->value;
  }

  /// Rebuilds the classifier for `num_classes` with fresh weights.
  void reset_head(int num_classes, std::uint64_t seed) {
    if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
    cfg_.num_classes = num_classes;
    net_.drop_group("head");
    rng_.seed(seed);
    build_head();
  }

private:
  struct ConvUnit {
    std::size_t weight = 0;
    std::optional<std::size_t> bias;
    std::optional<std::size_t> gamma, beta;
    std::size_t stats = 0;
    Index stride = 1;
    bool depthwise = false;
    bool activate = true;
  };
  struct SqueezeExcite {
    std::size_t reduce_w, reduce_b, expand_w, expand_b;
  };
  struct Block {
    MBConvLayout layout;
    std::optional<ConvUnit> expand;
    ConvUnit depthwise;
    std::optional<SqueezeExcite> se;
    ConvUnit project;
  };

  Var<Scalar> apply(const std::vector<Var<Scalar>> &p, const ConvUnit &u, Var<Scalar> x) {
    Var<Scalar> bias = u.bias ? p[*u.bias] : nullptr;
    x = u.depthwise ? depthwise_conv2d(x, p[u.weight], bias, u.stride, Padding::same)
                    : conv2d(x, p[u.weight], bias, u.stride, Padding::same);
    // A frozen unit keeps its running statistics, as in inference.
    if (u.gamma) {
      const bool frozen = !net_.parameter(*u.gamma).trainable;
      x = batch_norm(x, p[*u.gamma], p[*u.beta], &net_.norm_stats(u.stats), Scalar(0.1), Scalar(1e-5), frozen);
    }
    return u.activate ? swish(x) : x;
  }

  Tensor<Scalar> he_normal(Shape shape, Index fan_in) {
    return Tensor<Scalar>::normal(std::move(shape), Scalar(std::sqrt(2.0 / static_cast<double>(fan_in))), rng_);
  }

  ConvUnit add_conv(const std::string &name, const std::string &group, Index in, Index out, Index kernel,
                    Index stride, bool depthwise, bool activate) {
    ConvUnit u;
    u.stride = stride;
    u.depthwise = depthwise;
    u.activate = activate;
    LayerInfo info{name, depthwise ? "depthwise_conv" : "conv", group, {}, {}};
    const Index fan_in = depthwise ? kernel * kernel : in * kernel * kernel;
    u.weight = net_.add_parameter(name + ".weight", group,
                                  he_normal(depthwise ? Shape{out, 1, kernel, kernel} : Shape{out, in, kernel, kernel}, fan_in));
    info.params.push_back(u.weight);
    if (cfg_.norm == NormKind::batch) {
      u.gamma = net_.add_parameter(name + ".norm.scale", group, Tensor<Scalar>::constant({out}, Scalar(1)));
      u.beta = net_.add_parameter(name + ".norm.shift", group, Tensor<Scalar>::zeros({out}));
      u.stats = net_.add_norm_stats(out);
      info.params.push_back(*u.gamma);
      info.params.push_back(*u.beta);
    } else {
      u.bias = net_.add_parameter(name + ".bias", group, Tensor<Scalar>::zeros({out}));
      info.params.push_back(*u.bias);
    }
    if (depthwise && in != out) throw DimensionError(name + ": depthwise conv cannot change channel count");
    if (shape_[0] != in) {
      throw DimensionError(name + ": expects " + std::to_string(in) + " input channels, previous layer gives " +
                           std::to_string(shape_[0]));
    }
    const auto [h, w] = conv_output_dims(shape_[1], shape_[2], kernel, stride, Padding::same);
    shape_ = {out, h, w};
    info.output = shape_;
    net_.add_layer(std::move(info));
    return u;
  }

  void build() {
    const int div = cfg_.channel_divisor;
    shape_ = {cfg_.in_channels, cfg_.input_size, cfg_.input_size};
    int channels = round_channels(cfg_.stem_channels, cfg_.width_mult, div);
    stem_.push_back(add_conv("stem.conv", "stem", cfg_.in_channels, channels, cfg_.stem_kernel, cfg_.stem_stride,
                             false, true));

    for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
      const StageSpec &st = cfg_.stages[s];
      const std::string group = "stage" + std::to_string(s + 1);
      const int out = round_channels(st.channels, cfg_.width_mult, div);
      const int repeats = round_repeats(st.repeats, cfg_.depth_mult);
      for (int r = 0; r < repeats; ++r) {
        const int stride = r == 0 ? st.stride : 1;
        const std::string name = group + ".block" + std::to_string(r + 1);
        if (st.kind == StageKind::conv) {
          stem_.push_back(add_conv(name + ".conv", group, channels, out, st.kernel, stride, false, true));
        } else {
          add_block(name, group, build_mbconv(channels, out, st.expansion, st.kernel, stride, st.se_ratio));
        }
        channels = out;
      }
    }

    const int top = round_channels(cfg_.head_channels, cfg_.width_mult, div);
    top_ = add_conv("top.conv", "top", channels, top, 1, 1, false, true);
    build_head();
  }

  void add_block(const std::string &name, const std::string &group, const MBConvLayout &layout) {
    Block b;
    b.layout = layout;
    const Shape block_input = shape_;
    if (layout.has_expand)
      b.expand = add_conv(name + ".expand", group, layout.in_channels, layout.expanded_channels, 1, 1, false, true);
    b.depthwise = add_conv(name + ".depthwise", group, layout.expanded_channels, layout.expanded_channels,
                           layout.kernel, layout.stride, true, true);
    if (layout.se_channels > 0) {
      const Index c = layout.expanded_channels, s = layout.se_channels;
      SqueezeExcite se;
      se.reduce_w = net_.add_parameter(name + ".se.reduce.weight", group, he_normal({c, s}, c));
      se.reduce_b = net_.add_parameter(name + ".se.reduce.bias", group, Tensor<Scalar>::zeros({s}));
      se.expand_w = net_.add_parameter(name + ".se.expand.weight", group, he_normal({s, c}, s));
      se.expand_b = net_.add_parameter(name + ".se.expand.bias", group, Tensor<Scalar>::zeros({c}));
      net_.add_layer({name + ".se", "squeeze_excite", group, shape_,
                      {se.reduce_w, se.reduce_b, se.expand_w, se.expand_b}});
      b.se = se;
    }
    b.project = add_conv(name + ".project", group, layout.expanded_channels, layout.out_channels, 1, 1, false, false);
    if (layout.residual && shape_ != block_input)
      throw DimensionError(name + ": residual shortcut requires matching shapes");
    layouts_.push_back(layout);
    blocks_.push_back(std::move(b));
  }

  void build_head() {
    const Index features = round_channels(cfg_.head_channels, cfg_.width_mult, cfg_.channel_divisor);
    const Index classes = cfg_.num_classes;
    const Scalar bound = Scalar(1.0 / std::sqrt(static_cast<double>(features)));
    fc_weight_ = net_.add_parameter("head.fc.weight", "head", Tensor<Scalar>::uniform({features, classes}, -bound, bound, rng_));
    fc_bias_ = net_.add_parameter("head.fc.bias", "head", Tensor<Scalar>::zeros({classes}));
    net_.add_layer({"head.fc", "fully_connected", "head", {classes}, {fc_weight_, fc_bias_}});
  }

  EfficientNetConfig cfg_;
  std::mt19937_64 rng_;
  NetworkGraph<Scalar> net_;
  Shape shape_;
  std::vector<ConvUnit> stem_;
  std::vector<Block> blocks_;
  std::vector<MBConvLayout> layouts_;
  ConvUnit top_;
  std::size_t fc_weight_ = 0, fc_bias_ = 0;
};

} // namespace docclf

#endif // DOCCLF_MODEL_EFFICIENTNET_HPP
