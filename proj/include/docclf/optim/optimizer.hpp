#ifndef DOCCLF_OPTIM_OPTIMIZER_HPP
#define DOCCLF_OPTIM_OPTIMIZER_HPP

#include "docclf/model/network.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace docclf {

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 0.0;

  void validate() const {
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("sgd: momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("sgd: weight_decay must be >= 0");
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  void validate() const {
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw std::invalid_argument("adam: beta1 and beta2 must lie in [0, 1)");
    if (epsilon < 0.0) throw std::invalid_argument("adam: epsilon must be >= 0");
    if (weight_decay < 0.0) throw std::invalid_argument("adam: weight_decay must be >= 0");
  }
};

/// v <- momentum * v + g + wd * p;  p <- p - lr * v.
template <typename P, typename V, typename G>
void sgd_update(Eigen::ArrayBase<P> &param, Eigen::ArrayBase<V> &velocity, const Eigen::ArrayBase<G> &grad,
                double lr, const SgdConfig &cfg) {
  using S = typename P::Scalar;
  velocity.derived() = S(cfg.momentum) * velocity.derived() + grad.derived() + S(cfg.weight_decay) * param.derived();
  param.derived() -= S(lr) * velocity.derived();
}

/// Bias-corrected Adam step t (1-based) with the L2 term wd * p folded into
/// the gradient.
template <typename P, typename M, typename G>
void adam_update(Eigen::ArrayBase<P> &param, Eigen::ArrayBase<M> &m, Eigen::ArrayBase<M> &v,
                 const Eigen::ArrayBase<G> &grad, double lr, long t, const AdamConfig &cfg) {
  using S = typename P::Scalar;
  if (t < 1) throw std::invalid_argument("adam: step index must be >= 1");
  const auto g = (grad.derived() + S(cfg.weight_decay) * param.derived()).eval();
  m.derived() = S(cfg.beta1) * m.derived() + S(1.0 - cfg.beta1) * g;
  v.derived() = S(cfg.beta2) * v.derived() + S(1.0 - cfg.beta2) * g.square();
  const S c1 = S(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const S c2 = S(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  param.derived() -= S(lr) * (m.derived() / c1) / ((v.derived() / c2).sqrt() + S(cfg.epsilon));
}

/// Learning rate per parameter group; groups without an entry use `base`.
struct GroupRates {
  double base = 0.0;
  std::map<std::string, double> groups;

  double rate(const std::string &group) const {
    auto it = groups.find(group);
    return it == groups.end() ? base : it->second;
  }
};

namespace detail {

/// Every trainable gradient must be finite before anything is updated.
template <typename Scalar>
void check_gradients(const std::vector<Parameter<Scalar>> &params) {
  for (const auto &p : params) {
    if (!p.trainable || p.grad.empty()) continue;
    if (p.grad.shape() != p.value.shape())
      throw DimensionError("gradient of '" + p.name + "' has shape " + to_string(p.grad.shape()));
    if (!p.grad.all_finite()) throw std::domain_error("non-finite gradient in parameter '" + p.name + "'");
  }
}

} // namespace detail

/// Momentum SGD. State is keyed by parameter name, so the update does not
/// depend on parameter order. Frozen parameters are skipped.
template <typename Scalar>
class Sgd {
public:
  explicit Sgd(SgdConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const SgdConfig &config() const { return cfg_; }

  void step(std::vector<Parameter<Scalar>> &params, double lr) { step(params, GroupRates{lr, {}}); }

  void step(std::vector<Parameter<Scalar>> &params, const GroupRates &rates) {
    detail::check_gradients(params);
    for (auto &p : params) {
      if (!p.trainable) continue;
      auto &vel = velocity_.try_emplace(p.name, Tensor<Scalar>::zeros(p.value.shape())).first->second;
      const Tensor<Scalar> grad = p.grad.empty() ? Tensor<Scalar>::zeros(p.value.shape()) : p.grad;
      sgd_update(p.value.array(), vel.array(), grad.array(), rates.rate(p.group), cfg_);
    }
  }

  void reset() { velocity_.clear(); }

private:
  SgdConfig cfg_;
  std::map<std::string, Tensor<Scalar>> velocity_;
};

template <typename Scalar>
class Adam {
public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const AdamConfig &config() const { return cfg_; }
  long steps() const { return t_; }

  void step(std::vector<Parameter<Scalar>> &params, double lr) { step(params, GroupRates{lr, {}}); }

  void step(std::vector<Parameter<Scalar>> &params, const GroupRates &rates) {
    detail::check_gradients(params);
    ++t_;
    for (auto &p : params) {
      if (!p.trainable) continue;
      auto [it, fresh] = moments_.try_emplace(p.name);
      if (fresh) it->second = {Tensor<Scalar>::zeros(p.value.shape()), Tensor<Scalar>::zeros(p.value.shape())};
      const Tensor<Scalar> grad = p.grad.empty() ? Tensor<Scalar>::zeros(p.value.shape()) : p.grad;
      adam_update(p.value.array(), it->second.first.array(), it->second.second.array(), grad.array(),
                  rates.rate(p.group), t_, cfg_);
    }
  }

private:
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, std::pair<Tensor<Scalar>, Tensor<Scalar>>> moments_;
};

/// Marks only the parameters of `keep_trainable` groups as trainable and
/// returns the resulting mask. Unknown group names are rejected.
template <typename Scalar>
std::vector<bool> freeze(NetworkGraph<Scalar> &net, const std::vector<std::string> &keep_trainable) {
  for (const auto &g : keep_trainable)
    if (!net.has_group(g)) throw std::invalid_argument("freeze: unknown parameter group '" + g + "'");
  for (auto &p : net.parameters())
    p.trainable = std::find(keep_trainable.begin(), keep_trainable.end(), p.group) != keep_trainable.end();
  return net.trainable_mask();
}

template <typename Scalar>
void unfreeze_all(NetworkGraph<Scalar> &net) {
  for (auto &p : net.parameters()) p.trainable = true;
}

} // namespace docclf

#endif // DOCCLF_OPTIM_OPTIMIZER_HPP
