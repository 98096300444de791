#include "docclf/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace docclf;

namespace {

Tensor<double> randn(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor<double>::normal(std::move(s), 1.0, rng);
}

// Direct nested-loop convolution with explicit zero padding.
Tensor<double> conv_oracle(const Tensor<double> &x, const Tensor<double> &w, const Tensor<double> &b, Index stride,
                           Padding pad) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3), k = w.dim(0), f = w.dim(2);
  const auto gh = conv_geometry(h, f, stride, pad), gw = conv_geometry(wd, f, stride, pad);
  Tensor<double> out({n, k, gh.out, gw.out});
  for (Index i = 0; i < n; ++i)
    for (Index o = 0; o < k; ++o)
      for (Index y = 0; y < gh.out; ++y)
        for (Index xx = 0; xx < gw.out; ++xx) {
          double acc = b[o];
          for (Index ch = 0; ch < c; ++ch)
            for (Index dy = 0; dy < f; ++dy)
              for (Index dx = 0; dx < f; ++dx) {
                const Index sy = y * stride + dy - gh.pad_before, sx = xx * stride + dx - gw.pad_before;
                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                acc += x.at(i, ch, sy, sx) * w.at(o, ch, dy, dx);
              }
          out.at(i, o, y, xx) = acc;
        }
  return out;
}

} // namespace

TEST(Conv2d, OnesGiveFours) {
  Graph<double> g;
  auto y = conv2d(g.constant(Tensor<double>::constant({1, 1, 3, 3}, 1.0)),
                  g.constant(Tensor<double>::constant({1, 1, 2, 2}, 1.0)),
                  g.constant(Tensor<double>::zeros({1})), 1, Padding::valid);
  EXPECT_EQ(y->shape(), (Shape{1, 1, 2, 2}));
  EXPECT_TRUE((y->value.array() == 4.0).all());
}

TEST(Conv2d, ValidGeometryAt384) {
  EXPECT_EQ(conv_geometry(384, 3, 1, Padding::valid).out, 382);
}

TEST(Conv2d, ShapeAlgebraGrid) {
  for (Index in = 1; in <= 20; ++in)
    for (Index f = 1; f <= 7; ++f)
      for (Index s = 1; s <= 3; ++s) {
        EXPECT_EQ(conv_geometry(in, f, s, Padding::same).out, (in + s - 1) / s);
        if (f <= in) {
          EXPECT_EQ(conv_geometry(in, f, s, Padding::valid).out, (in - f) / s + 1);
          if (s == 1) {
            EXPECT_EQ(conv_geometry(in, f, s, Padding::valid).out, in - f + 1);
          }
        } else {
          EXPECT_THROW(conv_geometry(in, f, s, Padding::valid), DimensionError);
        }
      }
}

TEST(Conv2d, MatchesLoopOracle) {
  const auto x = randn({1, 2, 6, 6}, 1), w = randn({3, 2, 3, 3}, 2), b = randn({3}, 3);
  for (Index stride : {1, 2})
    for (Padding pad : {Padding::valid, Padding::same}) {
      Graph<double> g;
      auto y = conv2d(g.constant(x), g.constant(w), g.constant(b), stride, pad);
      const auto ref = conv_oracle(x, w, b, stride, pad);
      ASSERT_EQ(y->shape(), ref.shape());
      EXPECT_LT((y->value.array() - ref.array()).abs().maxCoeff(), 1e-12);
    }
}

TEST(Conv2d, BiasIsOptional) {
  const auto x = randn({2, 1, 4, 4}, 4), w = randn({2, 1, 3, 3}, 5);
  Graph<double> g;
  auto y = conv2d(g.constant(x), g.constant(w), Var<double>{}, 1, Padding::same);
  const auto ref = conv_oracle(x, w, Tensor<double>::zeros({2}), 1, Padding::same);
  EXPECT_LT((y->value.array() - ref.array()).abs().maxCoeff(), 1e-12);
}

TEST(Conv2d, Errors) {
  Graph<double> g;
  auto x = g.constant(randn({1, 2, 4, 4}, 1));
  EXPECT_THROW(conv2d(x, g.constant(randn({1, 3, 3, 3}, 2)), Var<double>{}, 1, Padding::valid), DimensionError);
  EXPECT_THROW(conv2d(x, g.constant(randn({1, 2, 5, 5}, 2)), Var<double>{}, 1, Padding::valid), DimensionError);
  EXPECT_THROW(conv2d(g.constant(randn({1, 2, 4}, 1)), g.constant(randn({1, 2, 3, 3}, 2)), Var<double>{}, 1,
                      Padding::valid),
               DimensionError);
}

TEST(DepthwiseConv2d, UnitFiltersAreIdentity) {
  const auto x = randn({1, 2, 4, 4}, 7);
  Graph<double> g;
  auto y = depthwise_conv2d(g.constant(x), g.constant(Tensor<double>::constant({2, 1, 1, 1}, 1.0)), Var<double>{}, 1,
                            Padding::valid);
  EXPECT_EQ(y->value, x);
}

TEST(DepthwiseConv2d, EqualsPerChannelConv) {
  const auto x = randn({1, 3, 5, 5}, 8), w = randn({3, 1, 3, 3}, 9);
  Graph<double> g;
  auto y = depthwise_conv2d(g.constant(x), g.constant(w), Var<double>{}, 1, Padding::valid);
  ASSERT_EQ(y->shape(), (Shape{1, 3, 3, 3}));
  for (Index c = 0; c < 3; ++c) {
    Tensor<double> xc({1, 1, 5, 5}), wc({1, 1, 3, 3});
    xc.array() = x.array().segment(c * 25, 25);
    wc.array() = w.array().segment(c * 9, 9);
    const auto ref = conv_oracle(xc, wc, Tensor<double>::zeros({1}), 1, Padding::valid);
    EXPECT_LT((y->value.array().segment(c * 9, 9) - ref.array()).abs().maxCoeff(), 1e-12);
  }
}

TEST(DepthwiseConv2d, ChannelIndependence) {
  auto x = randn({1, 2, 5, 5}, 10);
  const auto w = randn({2, 1, 3, 3}, 11);
  Graph<double> g1, g2;
  auto a = depthwise_conv2d(g1.constant(x), g1.constant(w), Var<double>{}, 2, Padding::same);
  x.array().segment(25, 25) += 1.0;
  auto b = depthwise_conv2d(g2.constant(x), g2.constant(w), Var<double>{}, 2, Padding::same);
  const Index plane = a->value.size() / 2;
  EXPECT_TRUE((a->value.array().head(plane) == b->value.array().head(plane)).all());
}

TEST(DepthwiseConv2d, RejectsWrongFilterCount) {
  Graph<double> g;
  EXPECT_THROW(depthwise_conv2d(g.constant(randn({1, 2, 5, 5}, 1)), g.constant(randn({3, 1, 3, 3}, 2)),
                                Var<double>{}, 1, Padding::valid),
               DimensionError);
}

TEST(MaxPool, TwoByTwo) {
  Graph<double> g(true);
  auto x = g.variable(Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4}));
  auto y = maxpool(x, 2, 2);
  EXPECT_EQ(y->value[0], 4.0);
  g.backward(sum(y));
  EXPECT_EQ(x->grad, Tensor<double>::from({1, 1, 2, 2}, {0, 0, 0, 1}));
}

TEST(MaxPool, ConstantInputRoutesToFirstPerWindow) {
  Graph<double> g(true);
  auto x = g.variable(Tensor<double>::constant({1, 1, 4, 4}, 2.5));
  auto y = maxpool(x, 2, 2);
  EXPECT_TRUE((y->value.array() == 2.5).all());
  g.backward(sum(y));
  EXPECT_DOUBLE_EQ(x->grad.array().sum(), 4.0);
  for (Index r = 0; r < 4; ++r)
    for (Index c = 0; c < 4; ++c) EXPECT_EQ(x->grad.at(0, 0, r, c), (r % 2 == 0 && c % 2 == 0) ? 1.0 : 0.0);
}

TEST(MaxPool, MatchesWindowScan) {
  const auto x = randn({1, 1, 6, 6}, 12);
  Graph<double> g;
  auto y = maxpool(g.constant(x), 2, 2);
  ASSERT_EQ(y->shape(), (Shape{1, 1, 3, 3}));
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < 3; ++c) {
      double m = -1e300;
      for (Index dy = 0; dy < 2; ++dy)
        for (Index dx = 0; dx < 2; ++dx) m = std::max(m, x.at(0, 0, 2 * r + dy, 2 * c + dx));
      EXPECT_EQ(y->value.at(0, 0, r, c), m);
    }
}

TEST(MaxPool, RejectsOversizedWindow) {
  Graph<double> g;
  EXPECT_THROW(maxpool(g.constant(randn({1, 1, 3, 3}, 1)), 4, 1), DimensionError);
}

TEST(SoftmaxCrossEntropy, UniformLogits) {
  Graph<double> g;
  const std::vector<int> labels{3};
  auto l = softmax_crossentropy(g.constant(Tensor<double>::zeros({1, 16})), std::span<const int>(labels));
  EXPECT_NEAR(l->value[0], std::log(16.0), 1e-12);
  EXPECT_NEAR(l->value[0], 2.7726, 1e-4);
}

TEST(SoftmaxCrossEntropy, SaturatedTrueClass) {
  Graph<double> g;
  auto logits = Tensor<double>::zeros({1, 4});
  logits[2] = 1000.0;
  const std::vector<int> labels{2};
  auto l = softmax_crossentropy(g.constant(logits), std::span<const int>(labels));
  EXPECT_TRUE(std::isfinite(l->value[0]));
  EXPECT_NEAR(l->value[0], 0.0, 1e-12);
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOnehotOverN) {
  const auto logits = randn({3, 5}, 13);
  const std::vector<int> labels{0, 4, 2};
  Graph<double> g(true);
  auto x = g.variable(logits);
  g.backward(softmax_crossentropy(x, std::span<const int>(labels)));
  for (Index r = 0; r < 3; ++r) {
    const Eigen::ArrayXd row = logits.matrix(3, 5).row(r).transpose().array();
    const Eigen::ArrayXd p = (row - row.maxCoeff()).exp() / (row - row.maxCoeff()).exp().sum();
    for (Index c = 0; c < 5; ++c) {
      const double expect = (p[c] - (labels[r] == c ? 1.0 : 0.0)) / 3.0;
      EXPECT_NEAR(x->grad.at(r, c), expect, 1e-12);
    }
  }
  // Central differences against the analytic gradient.
  for (Index i = 0; i < logits.size(); ++i) {
    const auto loss_at = [&](double delta) {
      auto t = logits;
      t[i] += delta;
      Graph<double> h;
      return softmax_crossentropy(h.constant(t), std::span<const int>(labels))->value[0];
    };
    EXPECT_NEAR((loss_at(1e-5) - loss_at(-1e-5)) / 2e-5, x->grad[i], 1e-10);
  }
}

TEST(SoftmaxCrossEntropy, RejectsBadLabel) {
  Graph<double> g;
  const std::vector<int> labels{5};
  EXPECT_THROW(softmax_crossentropy(g.constant(Tensor<double>::zeros({1, 5})), std::span<const int>(labels)),
               std::out_of_range);
}

TEST(Softmax, RowsAreDistributions) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = Tensor<double>::normal({3, 7}, 30.0, rng);
    Graph<double> g;
    auto y = softmax(g.constant(x));
    EXPECT_TRUE((y->value.array() >= 0.0).all());
    const auto m = y->value.matrix(3, 7);
    for (Index r = 0; r < 3; ++r) EXPECT_NEAR(m.row(r).sum(), 1.0, 1e-6);
  }
}

TEST(Activations, KnownValues) {
  Graph<double> g;
  auto x = g.constant(Tensor<double>::from({3}, {-1.0, 0.0, 2.0}));
  auto r = relu(x), s = sigmoid(x), w = swish(x), e = gelu(x);
  EXPECT_EQ(r->value, Tensor<double>::from({3}, {0.0, 0.0, 2.0}));
  EXPECT_NEAR(s->value[1], 0.5, 1e-15);
  EXPECT_NEAR(w->value[2], 2.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(e->value[2], 1.0 * (1.0 + std::erf(2.0 / std::numbers::sqrt2)), 1e-15);
}

TEST(Matmul, MatchesEigen) {
  const auto a = randn({3, 4}, 15), b = randn({4, 2}, 16);
  Graph<double> g;
  auto y = matmul(g.constant(a), g.constant(b));
  const RowMatrix<double> ref = a.matrix(3, 4) * b.matrix(4, 2);
  EXPECT_LT((y->value.matrix(3, 2) - ref).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(matmul(g.constant(a), g.constant(a)), DimensionError);
}

TEST(BatchNorm, TrainingNormalizesAndUpdatesStats) {
  const auto x = randn({4, 2, 3, 3}, 17);
  NormStats<double> stats(2);
  Graph<double> g(true);
  auto y = batch_norm(g.constant(x), g.constant(Tensor<double>::constant({2}, 1.0)),
                      g.constant(Tensor<double>::zeros({2})), &stats);
  for (Index c = 0; c < 2; ++c) {
    double mu = 0.0, sq = 0.0;
    for (Index n = 0; n < 4; ++n)
      for (Index i = 0; i < 9; ++i) {
        const double v = y->value[(n * 2 + c) * 9 + i];
        mu += v;
        sq += v * v;
      }
    EXPECT_NEAR(mu / 36.0, 0.0, 1e-12);
    EXPECT_NEAR(sq / 36.0, 1.0, 1e-3);
  }
  EXPECT_FALSE((stats.mean == 0.0).all());
}

TEST(BatchNorm, InferenceUsesRunningStats) {
  NormStats<double> stats(1);
  stats.mean << 2.0;
  stats.var << 4.0;
  Graph<double> g(false);
  auto y = batch_norm(g.constant(Tensor<double>::from({2, 1}, {2.0, 6.0})),
                      g.constant(Tensor<double>::constant({1}, 3.0)), g.constant(Tensor<double>::constant({1}, 1.0)),
                      &stats, 0.1, 0.0);
  EXPECT_NEAR(y->value[0], 1.0, 1e-12);
  EXPECT_NEAR(y->value[1], 7.0, 1e-12);
  EXPECT_EQ(stats.mean[0], 2.0);
}

TEST(BatchNorm, FrozenLeavesStatsUntouched) {
  NormStats<double> stats(2);
  const auto before = stats.mean;
  Graph<double> g(true);
  (void)batch_norm(g.constant(randn({3, 2}, 18)), g.constant(Tensor<double>::constant({2}, 1.0)),
                   g.constant(Tensor<double>::zeros({2})), &stats, 0.1, 1e-5, true);
  EXPECT_TRUE((stats.mean == before).all());
}

TEST(LayerNorm, RowsNormalized) {
  Graph<double> g;
  auto y = layer_norm(g.constant(randn({2, 3, 8}, 19)), g.constant(Tensor<double>::constant({8}, 1.0)),
                      g.constant(Tensor<double>::zeros({8})));
  const auto m = y->value.matrix(6, 8);
  for (Index r = 0; r < 6; ++r) {
    EXPECT_NEAR(m.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(m.row(r).squaredNorm() / 8.0, 1.0, 1e-4);
  }
}

TEST(Dropout, IdentityInInferenceAndScaledInTraining) {
  const auto x = Tensor<double>::constant({1000}, 1.0);
  Graph<double> eval(false);
  auto v = eval.constant(x);
  EXPECT_EQ(dropout(v, 0.5), v);
  Graph<double> train(true, 3);
  auto y = dropout(train.variable(x), 0.25);
  const Index kept = (y->value.array() != 0.0).count();
  EXPECT_TRUE(((y->value.array() == 0.0) || (y->value.array() - 1.0 / 0.75).abs() < 1e-12).all());
  EXPECT_NEAR(static_cast<double>(kept) / 1000.0, 0.75, 0.05);
  EXPECT_THROW(dropout(v, 1.0), std::invalid_argument);
}

TEST(Embedding, GathersRows) {
  const auto table = randn({5, 3}, 20);
  const std::vector<std::int32_t> ids{4, 0, 4};
  Graph<double> g;
  auto y = embedding(std::span<const std::int32_t>(ids), {1, 3}, g.constant(table));
  EXPECT_EQ(y->shape(), (Shape{1, 3, 3}));
  for (Index d = 0; d < 3; ++d) {
    EXPECT_EQ(y->value.at(0, 0, d), table.at(4, d));
    EXPECT_EQ(y->value.at(0, 1, d), table.at(0, d));
  }
  const std::vector<std::int32_t> bad{5};
  EXPECT_THROW(embedding(std::span<const std::int32_t>(bad), {1}, g.constant(table)), DimensionError);
}

TEST(MaskKeys, MaskedKeysGetNoAttention) {
  Graph<double> g;
  const std::vector<std::uint8_t> mask{1, 1, 0};
  auto a = softmax(mask_keys(g.constant(randn({2, 2, 3}, 21)), std::span<const std::uint8_t>(mask), 2));
  for (Index i = 0; i < 4; ++i) EXPECT_LT(a->value[i * 3 + 2], 1e-300);
}

TEST(GlobalAvgPool, Means) {
  Graph<double> g;
  auto y = global_avg_pool(g.constant(Tensor<double>::from({1, 2, 1, 2}, {1, 3, 5, 9})));
  EXPECT_EQ(y->value, Tensor<double>::from({1, 2}, {2, 7}));
}
