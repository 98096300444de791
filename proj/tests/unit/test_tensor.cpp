#include "docclf/tensor.hpp"

#include <gtest/gtest.h>

using namespace docclf;

TEST(Tensor, ShapeAndZeroInit) {
  Tensor<double> t({2, 3, 4});
  EXPECT_EQ(t.rank(), 3);
  EXPECT_EQ(t.size(), 24);
  EXPECT_EQ(t.dim(-1), 4);
  EXPECT_TRUE((t.array() == 0.0).all());
}

TEST(Tensor, RowMajorIndexing) {
  auto t = Tensor<double>::from({2, 3}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at(1, 0), 3.0);
  EXPECT_EQ(t.at(0, 2), 2.0);
  EXPECT_EQ(t.matrix(2, 3)(1, 2), 5.0);
}

TEST(Tensor, RejectsNonPositiveExtents) {
  EXPECT_THROW(Tensor<double>({2, 0}), DimensionError);
  EXPECT_THROW(Tensor<double>({-1}), DimensionError);
}

TEST(Tensor, RejectsDataLengthMismatch) {
  EXPECT_THROW(Tensor<double>({2, 2}, Eigen::ArrayXd::Zero(3)), DimensionError);
}

TEST(Tensor, ReshapeKeepsOrder) {
  auto t = Tensor<double>::from({2, 3}, {0, 1, 2, 3, 4, 5});
  auto r = t.reshaped({3, 2});
  EXPECT_EQ(r.at(2, 1), 5.0);
  EXPECT_THROW((void)t.reshaped({4, 2}), DimensionError);
}

TEST(Tensor, MatrixViewMustCover) {
  Tensor<double> t({2, 3});
  EXPECT_THROW((void)t.matrix(2, 2), DimensionError);
}

TEST(Tensor, CastRoundTrip) {
  auto t = Tensor<double>::from({3}, {0.5, -1.25, 2.0});
  EXPECT_EQ(t.cast<float>().cast<double>(), t);
}

TEST(Tensor, SeededRandomIsReproducible) {
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(Tensor<double>::normal({4, 4}, 1.0, a), Tensor<double>::normal({4, 4}, 1.0, b));
}

TEST(Tensor, ChecksumSeesEveryElementAndOrder) {
  auto t = Tensor<double>::from({3}, {1, 2, 3});
  auto u = Tensor<double>::from({3}, {1, 3, 2});
  EXPECT_NE(checksum(t), checksum(u));
  auto v = t;
  EXPECT_EQ(checksum(t), checksum(v));
  v[2] = std::nextafter(3.0, 4.0);
  EXPECT_NE(checksum(t), checksum(v));
}

TEST(Tensor, AllFinite) {
  auto t = Tensor<double>::from({2}, {1, 2});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
}
