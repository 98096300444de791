#include "docclf/model/scaling.hpp"

#include <cmath>
#include <stdexcept>

namespace docclf {

void ScalingSpec::validate() const {
  if (alpha < 1.0 || beta < 1.0 || gamma < 1.0)
    throw std::invalid_argument("scaling bases alpha, beta, gamma must all be >= 1");
  if (phi < 0.0) throw std::invalid_argument("compound coefficient phi must be >= 0");
}

ScaledDims compound_scale(const ScalingSpec &spec, int base_input_size, int size_divisor) {
  spec.validate();
  if (base_input_size <= 0) throw std::invalid_argument("base input size must be positive");
  if (size_divisor <= 0) throw std::invalid_argument("size divisor must be positive");
  ScaledDims dims;
  const double a = std::pow(spec.alpha, spec.phi);
  const double b = std::pow(spec.beta, spec.phi);
  if (spec.binding == ScalingBinding::depth_alpha) {
    dims.depth_mult = a;
    dims.width_mult = b;
  } else {
    dims.width_mult = a;
    dims.depth_mult = b;
  }
  dims.resolution_mult = std::pow(spec.gamma, spec.phi);
  dims.raw_input_size = static_cast<int>(std::lround(base_input_size * dims.resolution_mult));
  const double units = static_cast<double>(dims.raw_input_size) / size_divisor;
  dims.input_size = std::max(size_divisor, static_cast<int>(std::floor(units + 0.5)) * size_divisor);
  dims.constraint_residual = spec.constraint_residual();
  dims.constraint_flagged = !spec.constraint_satisfied();
  return dims;
}

std::pair<Index, Index> conv_output_dims(Index length, Index breadth, Index kernel, Index stride, Padding padding) {
  const auto l = conv_geometry(length, kernel, stride, padding);
  const auto b = conv_geometry(breadth, kernel, stride, padding);
  if (l.out <= 0 || b.out <= 0) throw DimensionError("convolution output extent is not positive");
  return {l.out, b.out};
}

int round_channels(int channels, double width_mult, int divisor) {
  if (channels <= 0) throw std::invalid_argument("channel count must be positive");
  const double scaled = channels * width_mult;
  int rounded = std::max(divisor, static_cast<int>(scaled + divisor / 2.0) / divisor * divisor);
  if (rounded < 0.9 * scaled) rounded += divisor;
  return rounded;
}

int round_repeats(int repeats, double depth_mult) {
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  // Guard against 1.2 * 5 evaluating to 6.000000000000001.
  return std::max(repeats, static_cast<int>(std::ceil(repeats * depth_mult - 1e-9)));
}

std::string to_string(ScalingBinding binding) {
  return binding == ScalingBinding::depth_alpha ? "depth_alpha" : "width_alpha";
}

ScalingBinding parse_scaling_binding(const std::string &name) {
  if (name == "depth_alpha") return ScalingBinding::depth_alpha;
  if (name == "width_alpha") return ScalingBinding::width_alpha;
  throw std::invalid_argument("unknown scaling binding '" + name + "'");
}

} // namespace docclf
