#ifndef DOCCLF_MODEL_TEXT_ENCODER_HPP
#define DOCCLF_MODEL_TEXT_ENCODER_HPP

#include "docclf/model/network.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace docclf {

enum class Activation { gelu, relu, swish };

struct TextEncoderConfig {
  int num_layers = 6;
  int hidden = 768;
  int heads = 12;
  /// Feed-forward width; 0 means 4 * hidden.
  int intermediate = 0;
  int vocab_size = 30522;
  int max_len = 512;
  int num_classes = 16;
  double dropout = 0.2;
  Activation activation = Activation::gelu;

  int ffn_width() const { return intermediate > 0 ? intermediate : 4 * hidden; }
  void validate() const;
};

/// Row-major [batch, length] token ids with a parallel attention mask.
struct TokenBatch {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;
  Index batch = 0;
  Index length = 0;
};

nlohmann::json to_json(const TextEncoderConfig &cfg);
TextEncoderConfig text_encoder_config_from_json(const nlohmann::json &j);
std::string to_string(Activation a);
Activation parse_activation(const std::string &name);

/// Token + learned position embeddings, post-norm encoder layers and a
/// classifier on the final [CLS] state. Groups: "embedding",
/// "encoder.1" (bottom) .. "encoder.L" (top), "head".
template <typename Scalar_>
class TextEncoder {
public:
  using Scalar = Scalar_;

  TextEncoder(TextEncoderConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
    build();
  }

  const TextEncoderConfig &config() const { return cfg_; }
  NetworkGraph<Scalar> &network() { return net_; }
  const NetworkGraph<Scalar> &network() const { return net_; }

  static std::string layer_group(int layer) { return "encoder." + std::to_string(layer); }

  /// Final hidden states [B, L, hidden].
  Var<Scalar> encode(Graph<Scalar> &g, const TokenBatch &tokens) { return encode(bind_parameters(g, net_), tokens); }

  /// Logits [B, num_classes] from h_[CLS] (position 0).
  Var<Scalar> logits(Graph<Scalar> &g, const TokenBatch &tokens) {
    const auto p = bind_parameters(g, net_);
    auto cls = dropout(select_token(encode(p, tokens), 0), cfg_.dropout);
    return linear(cls, p[fc_w_], p[fc_b_]);
  }

  Tensor<Scalar> predict_proba(const TokenBatch &tokens) {
    Graph<Scalar> g(false);
    return softmax(logits(g, tokens))->value;
  }

  void reset_head(int num_classes, std::uint64_t seed) {
    if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
    cfg_.num_classes = num_classes;
    net_.drop_group("head");
    rng_.seed(seed);
    build_head();
  }

private:
  struct Layer {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };

  Var<Scalar> encode(const std::vector<Var<Scalar>> &p, const TokenBatch &tokens) {
    check(tokens);
    const Index b = tokens.batch, l = tokens.length, d = cfg_.hidden;
    std::vector<std::int32_t> positions(static_cast<std::size_t>(b * l));
    for (Index i = 0; i < b; ++i)
      for (Index j = 0; j < l; ++j) positions[static_cast<std::size_t>(i * l + j)] = static_cast<std::int32_t>(j);
    auto x = add(embedding<Scalar>(tokens.ids, {b, l}, p[tok_]), embedding<Scalar>(positions, {b, l}, p[pos_]));
    x = dropout(layer_norm(x, p[emb_ln_g_], p[emb_ln_b_]), cfg_.dropout);

    const Index h = cfg_.heads, dh = d / h;
    const auto split_heads = [&](const Var<Scalar> &t) {
      return reshape(permute(reshape(t, {b, l, h, dh}), {0, 2, 1, 3}), {b * h, l, dh});
    };
    for (const auto &layer : layers_) {
      auto q = split_heads(linear(x, p[layer.wq], p[layer.bq]));
      auto k = split_heads(linear(x, p[layer.wk], p[layer.bk]));
      auto v = split_heads(linear(x, p[layer.wv], p[layer.bv]));
      auto scores = scale(batched_matmul(q, k, true), Scalar(1.0 / std::sqrt(static_cast<double>(dh))));
      auto attn = dropout(softmax(mask_keys<Scalar>(scores, tokens.mask, h)), cfg_.dropout);
      auto ctx = reshape(permute(reshape(batched_matmul(attn, v), {b, h, l, dh}), {0, 2, 1, 3}), {b, l, d});
      auto a = dropout(linear(ctx, p[layer.wo], p[layer.bo]), cfg_.dropout);
      x = layer_norm(add(x, a), p[layer.ln1_g], p[layer.ln1_b]);
      auto f = activate(linear(x, p[layer.w1], p[layer.b1]));
      f = dropout(linear(f, p[layer.w2], p[layer.b2]), cfg_.dropout);
      x = layer_norm(add(x, f), p[layer.ln2_g], p[layer.ln2_b]);
    }
    return x;
  }

  void check(const TokenBatch &t) const {
    if (t.batch < 1 || t.length < 1) throw DimensionError("text encoder: empty token batch");
    if (t.length > cfg_.max_len) {
      throw DimensionError("text encoder: sequence length " + std::to_string(t.length) + " exceeds max_len " +
                           std::to_string(cfg_.max_len));
    }
    const auto n = static_cast<std::size_t>(t.batch * t.length);
    if (t.ids.size() != n || t.mask.size() != n) throw DimensionError("text encoder: ids/mask size mismatch");
  }

  Var<Scalar> activate(const Var<Scalar> &x) const {
    switch (cfg_.activation) {
    case Activation::relu: return relu(x);
    case Activation::swish: return swish(x);
    case Activation::gelu: break;
    }
    return gelu(x);
  }

  Tensor<Scalar> init(Shape shape) { return Tensor<Scalar>::normal(std::move(shape), Scalar(0.02), rng_); }

  std::size_t weight(const std::string &name, const std::string &group, Index in, Index out) {
    return net_.add_parameter(name, group, init({in, out}));
  }
  std::size_t zeros(const std::string &name, const std::string &group, Index n) {
    return net_.add_parameter(name, group, Tensor<Scalar>::zeros({n}));
  }
  std::size_t ones(const std::string &name, const std::string &group, Index n) {
    return net_.add_parameter(name, group, Tensor<Scalar>::constant({n}, Scalar(1)));
  }

  void build() {
    const Index d = cfg_.hidden, f = cfg_.ffn_width();
    const std::string emb = "embedding";
    tok_ = net_.add_parameter("embedding.token", emb, init({cfg_.vocab_size, d}));
    pos_ = net_.add_parameter("embedding.position", emb, init({cfg_.max_len, d}));
    emb_ln_g_ = ones("embedding.norm.scale", emb, d);
    emb_ln_b_ = zeros("embedding.norm.shift", emb, d);
    net_.add_layer({"embedding", "embedding", emb, {cfg_.max_len, d}, {tok_, pos_, emb_ln_g_, emb_ln_b_}});

    for (int i = 1; i <= cfg_.num_layers; ++i) {
      const std::string g = layer_group(i);
      Layer l{};
      l.wq = weight(g + ".attn.query.weight", g, d, d);
      l.bq = zeros(g + ".attn.query.bias", g, d);
      l.wk = weight(g + ".attn.key.weight", g, d, d);
      l.bk = zeros(g + ".attn.key.bias", g, d);
      l.wv = weight(g + ".attn.value.weight", g, d, d);
      l.bv = zeros(g + ".attn.value.bias", g, d);
      l.wo = weight(g + ".attn.output.weight", g, d, d);
      l.bo = zeros(g + ".attn.output.bias", g, d);
      l.ln1_g = ones(g + ".attn.norm.scale", g, d);
      l.ln1_b = zeros(g + ".attn.norm.shift", g, d);
      l.w1 = weight(g + ".ffn.in.weight", g, d, f);
      l.b1 = zeros(g + ".ffn.in.bias", g, f);
      l.w2 = weight(g + ".ffn.out.weight", g, f, d);
      l.b2 = zeros(g + ".ffn.out.bias", g, d);
      l.ln2_g = ones(g + ".ffn.norm.scale", g, d);
      l.ln2_b = zeros(g + ".ffn.norm.shift", g, d);
      net_.add_layer({g + ".attention", "self_attention", g, {cfg_.max_len, d},
                      {l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.ln1_g, l.ln1_b}});
      net_.add_layer({g + ".ffn", "feed_forward", g, {cfg_.max_len, d}, {l.w1, l.b1, l.w2, l.b2, l.ln2_g, l.ln2_b}});
      layers_.push_back(l);
    }
    build_head();
  }

  void build_head() {
    fc_w_ = weight("head.fc.weight", "head", cfg_.hidden, cfg_.num_classes);
    fc_b_ = zeros("head.fc.bias", "head", cfg_.num_classes);
    net_.add_layer({"head.fc", "fully_connected", "head", {cfg_.num_classes}, {fc_w_, fc_b_}});
  }

  TextEncoderConfig cfg_;
  std::mt19937_64 rng_;
  NetworkGraph<Scalar> net_;
  std::size_t tok_ = 0, pos_ = 0, emb_ln_g_ = 0, emb_ln_b_ = 0;
  std::vector<Layer> layers_;
  std::size_t fc_w_ = 0, fc_b_ = 0;
};

} // namespace docclf

#endif // DOCCLF_MODEL_TEXT_ENCODER_HPP
