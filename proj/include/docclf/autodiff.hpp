#ifndef DOCCLF_AUTODIFF_HPP
#define DOCCLF_AUTODIFF_HPP

#include "docclf/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace docclf {

/// A named, grouped, trainable tensor owned by a network.
template <typename Scalar>
struct Parameter {
  std::string name;
  std::string group;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool trainable = true;

  void zero_grad() { grad = Tensor<Scalar>::zeros(value.shape()); }
};

template <typename Scalar>
class Graph;

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  Graph<Scalar> *graph = nullptr;
  Parameter<Scalar> *sink = nullptr;

  Index dim(Index axis) const { return value.dim(axis); }
  const Shape &shape() const { return value.shape(); }

  Tensor<Scalar> &grad_buffer() {
    if (grad.empty()) grad = Tensor<Scalar>::zeros(value.shape());
    return grad;
  }
};

template <typename Scalar>
using Var = std::shared_ptr<Node<Scalar>>;

/// One recorded operation. Inputs always precede the output on the tape.
template <typename Scalar>
struct OpRecord {
  std::string kind;
  std::vector<Var<Scalar>> inputs;
  Var<Scalar> output;
  std::function<void(Node<Scalar> *)> backward;
};

/// Tape-based reverse-mode graph. Operations append to the tape as they are
/// evaluated, so tape order is a topological order and backward is a single
/// reverse sweep. A graph is used from one thread only.
template <typename Scalar>
class Graph {
public:
  explicit Graph(bool training = false, std::uint64_t seed = 0) : training_(training), rng_(seed) {}

  Graph(const Graph &) = delete;
  Graph &operator=(const Graph &) = delete;

  bool training() const { return training_; }
  std::mt19937_64 &rng() { return rng_; }

  Var<Scalar> constant(Tensor<Scalar> value) { return make_leaf(std::move(value), false); }
  Var<Scalar> variable(Tensor<Scalar> value) { return make_leaf(std::move(value), true); }

  /// Binds a parameter as a leaf. Its gradient is added into `p.grad` when
  /// backward() finishes; frozen parameters do not request gradients.
  Var<Scalar> parameter(Parameter<Scalar> &p) {
    auto node = make_leaf(p.value, p.trainable);
    if (p.trainable) {
      node->sink = &p;
      sinks_.push_back(node);
    }
    return node;
  }

  /// Appends an op. `backward(out)` adds input gradients given `out->grad`;
  /// it is only stored when some input needs a gradient, otherwise the output
  /// is a constant.
  template <typename Backward>
  Var<Scalar> record(std::string kind, std::vector<Var<Scalar>> inputs, Tensor<Scalar> out,
                     Backward &&backward) {
    bool needs = false;
    for (const auto &in : inputs) needs = needs || (in && in->requires_grad);
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(out);
    node->graph = this;
    node->requires_grad = needs;
    if (needs) {
      ops_.push_back(OpRecord<Scalar>{std::move(kind), std::move(inputs), node,
                                      std::forward<Backward>(backward)});
    }
    return node;
  }

  /// Reverse sweep from a scalar loss. Callable once per graph.
  void backward(const Var<Scalar> &loss) {
    if (!loss || loss->value.size() != 1) {
      throw DimensionError("backward requires a scalar loss, got shape " +
                           (loss ? to_string(loss->shape()) : std::string("<null>")));
    }
    if (done_) throw std::logic_error("backward already ran on this graph");
    done_ = true;
    loss->grad = Tensor<Scalar>::constant(loss->shape(), Scalar(1));
    visited_ = 0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (it->output->grad.empty()) continue;
      it->backward(it->output.get());
      ++visited_;
    }
    for (const auto &leaf : sinks_) {
      if (leaf->grad.empty()) continue;
      auto &p = *leaf->sink;
      if (p.grad.empty()) p.zero_grad();
      p.grad.array() += leaf->grad.array();
    }
  }

  const std::vector<OpRecord<Scalar>> &tape() const { return ops_; }
  std::size_t visited() const { return visited_; }

private:
  Var<Scalar> make_leaf(Tensor<Scalar> value, bool requires_grad) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->graph = this;
    return node;
  }

  bool training_;
  bool done_ = false;
  std::size_t visited_ = 0;
  std::mt19937_64 rng_;
  std::vector<OpRecord<Scalar>> ops_;
  std::vector<Var<Scalar>> sinks_;
};

} // namespace docclf

#endif // DOCCLF_AUTODIFF_HPP
