#ifndef DOCCLF_DATA_IMAGE_HPP
#define DOCCLF_DATA_IMAGE_HPP

#include "docclf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>

namespace docclf {

/// Bilinear resize of a [C, H, W] image to [C, target, target] with
/// half-pixel centres and clamped borders.
template <typename Scalar>
Tensor<Scalar> resize(const Tensor<Scalar> &image, int target) {
  if (image.rank() != 3) throw DimensionError("resize: expected [C,H,W], got " + to_string(image.shape()));
  if (target < 1) throw std::invalid_argument("resize: target must be positive");
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor<Scalar> out({c, target, target});
  const auto source = [](Index dst, Index in, Index outn, Index &lo, Index &hi, double &frac) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    lo = static_cast<Index>(std::floor(s));
    hi = std::min(lo + 1, in - 1);
    frac = s - static_cast<double>(lo);
  };
  for (Index y = 0; y < target; ++y) {
    Index y0, y1;
    double fy;
    source(y, h, target, y0, y1, fy);
    for (Index x = 0; x < target; ++x) {
      Index x0, x1;
      double fx;
      source(x, w, target, x0, x1, fx);
      for (Index ch = 0; ch < c; ++ch) {
        const double top = (1 - fx) * image.at(ch, y0, x0) + fx * image.at(ch, y0, x1);
        const double bottom = (1 - fx) * image.at(ch, y1, x0) + fx * image.at(ch, y1, x1);
        out.at(ch, y, x) = static_cast<Scalar>((1 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

/// Horizontal shear x' = x + tan(theta) * (y - cy), cy = (H - 1) / 2.
/// Each output pixel samples its source row bilinearly; samples outside the
/// image take `fill`.
template <typename Scalar>
Tensor<Scalar> shear(const Tensor<Scalar> &image, double theta_degrees, Scalar fill = Scalar(1)) {
  if (image.rank() != 3) throw DimensionError("shear: expected [C,H,W], got " + to_string(image.shape()));
  const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const double t = std::tan(theta_degrees * std::numbers::pi / 180.0);
  const double cy = static_cast<double>(h - 1) / 2.0;
  Tensor<Scalar> out(image.shape());
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y) {
      const double shift = t * (static_cast<double>(y) - cy);
      for (Index x = 0; x < w; ++x) {
        const double xs = static_cast<double>(x) - shift;
        const double x0f = std::floor(xs);
        const double f = xs - x0f;
        const auto x0 = static_cast<Index>(x0f);
        const auto get = [&](Index xi) {
          return xi >= 0 && xi < w ? static_cast<double>(image.at(ch, y, xi)) : static_cast<double>(fill);
        };
        out.at(ch, y, x) = static_cast<Scalar>(f == 0.0 ? get(x0) : (1 - f) * get(x0) + f * get(x0 + 1));
      }
    }
  return out;
}

struct AugmentConfig {
  double shear_min = -5.0;
  double shear_max = 5.0;
  /// Augmentation runs on the training path only.
  bool enabled = true;

  void validate() const {
    if (shear_min > shear_max) throw std::invalid_argument("augment: shear_min exceeds shear_max");
  }
};

/// Shear angle for one sample in one epoch, independent of batch layout
/// and worker count.
inline double draw_shear_angle(const AugmentConfig &cfg, std::uint64_t seed, std::uint64_t epoch,
                               std::uint64_t sample) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(sample),
                    static_cast<std::uint32_t>(sample >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> angle(cfg.shear_min, cfg.shear_max);
  return angle(rng);
}

} // namespace docclf

#endif // DOCCLF_DATA_IMAGE_HPP
