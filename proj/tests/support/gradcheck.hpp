#ifndef DOCCLF_TESTS_GRADCHECK_HPP
#define DOCCLF_TESTS_GRADCHECK_HPP

// Finite-difference check of reverse-mode gradients with the fourth-order
// five-point central stencil. The op output is contracted with a fixed
// random tensor so every output element carries a distinct weight into the
// scalar loss.

#include "docclf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace docclf::testing {

using BuildFn = std::function<Var<double>(Graph<double> &, const std::vector<Var<double>> &)>;

struct GradCheck {
  /// max over inputs of |analytic - numeric|_2 / (|analytic|_2 + |numeric|_2)
  double rel_error = 0.0;
  double max_abs_error = 0.0;
  /// Inputs whose analytic gradient is exactly zero.
  int zero_gradient_inputs = 0;
};

/// Largest finite-difference norm accepted for an input with zero gradient.
inline constexpr double kFlatTolerance = 1e-9;

inline GradCheck check_gradients(const std::vector<Tensor<double>> &inputs, const BuildFn &build,
                                 std::uint64_t seed = 7, bool training = true, double h = 1e-3) {
  Tensor<double> weights;
  const auto loss_of = [&](const std::vector<Tensor<double>> &xs, std::vector<Tensor<double>> *grads) {
    Graph<double> g(training, seed);
    std::vector<Var<double>> leaves;
    for (const auto &x : xs) leaves.push_back(g.variable(x));
    auto out = build(g, leaves);
    if (weights.empty()) {
      std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
      weights = Tensor<double>::uniform(out->shape(), -1.0, 1.0, rng);
    }
    auto loss = sum(mul(out, g.constant(weights)));
    if (grads) {
      g.backward(loss);
      for (const auto &leaf : leaves)
        grads->push_back(leaf->grad.empty() ? Tensor<double>::zeros(leaf->shape()) : leaf->grad);
    }
    return loss->value[0];
  };

  std::vector<Tensor<double>> analytic;
  loss_of(inputs, &analytic);

  GradCheck result;
  auto xs = inputs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Tensor<double> numeric(xs[i].shape());
    for (Index j = 0; j < xs[i].size(); ++j) {
      const double orig = xs[i][j];
      const auto at = [&](double offset) {
        xs[i][j] = orig + offset;
        return loss_of(xs, nullptr);
      };
      numeric[j] = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
      xs[i][j] = orig;
    }
    const double diff = (analytic[i].array() - numeric.array()).matrix().norm();
    const double scale = analytic[i].array().matrix().norm() + numeric.array().matrix().norm();
    const double analytic_norm = analytic[i].array().matrix().norm();
    if (analytic_norm == 0.0) {
      // Relative error is undefined here; the loss must be flat in this input.
      ++result.zero_gradient_inputs;
      if (diff > kFlatTolerance) result.rel_error = std::max(result.rel_error, 1.0);
    } else {
      result.rel_error = std::max(result.rel_error, diff / scale);
    }
    result.max_abs_error =
        std::max(result.max_abs_error, (analytic[i].array() - numeric.array()).abs().maxCoeff());
  }
  return result;
}

} // namespace docclf::testing

#endif // DOCCLF_TESTS_GRADCHECK_HPP
