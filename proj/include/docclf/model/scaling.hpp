#ifndef DOCCLF_MODEL_SCALING_HPP
#define DOCCLF_MODEL_SCALING_HPP

#include "docclf/ops.hpp"

#include <string>
#include <utility>

namespace docclf {

/// Which base exponentiates into which multiplier. `depth_alpha` is the
/// binding consistent with alpha * beta^2 * gamma^2 ~= 2 (width and
/// resolution are the squared terms); `width_alpha` swaps depth and width.
enum class ScalingBinding { depth_alpha, width_alpha };

struct ScalingSpec {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double phi = 0.0;
  ScalingBinding binding = ScalingBinding::depth_alpha;
  double tolerance = 0.05;

  /// |alpha * beta^2 * gamma^2 - 2|.
  double constraint_residual() const { return std::abs(alpha * beta * beta * gamma * gamma - 2.0); }
  bool constraint_satisfied() const { return constraint_residual() <= tolerance; }
  void validate() const;
};

struct ScaledDims {
  double width_mult = 1.0;
  double depth_mult = 1.0;
  double resolution_mult = 1.0;
  /// round(base * r) before snapping.
  int raw_input_size = 0;
  /// raw_input_size snapped to the nearest multiple of the size divisor.
  int input_size = 0;
  double constraint_residual = 0.0;
  bool constraint_flagged = false;
};

/// w, d, r from the bases raised to phi. Throws for phi < 0 or a base < 1.
ScaledDims compound_scale(const ScalingSpec &spec, int base_input_size, int size_divisor = 8);

/// Output extents (L', B') of a convolution over an L x B map.
std::pair<Index, Index> conv_output_dims(Index length, Index breadth, Index kernel, Index stride, Padding padding);

/// Channels scaled by `width_mult`, rounded to a multiple of `divisor`, never
/// below `divisor` and never more than 10% under the unrounded value.
int round_channels(int channels, double width_mult, int divisor = 8);

/// ceil(repeats * depth_mult).
int round_repeats(int repeats, double depth_mult);

std::string to_string(ScalingBinding binding);
ScalingBinding parse_scaling_binding(const std::string &name);

} // namespace docclf

#endif // DOCCLF_MODEL_SCALING_HPP
