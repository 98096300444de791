#ifndef DOCCLF_MODEL_NETWORK_HPP
#define DOCCLF_MODEL_NETWORK_HPP

#include "docclf/ops.hpp"
#include "docclf/serialize.hpp"

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace docclf {

/// One built layer: what it is, which group owns it, the per-sample output
/// shape it produces and the parameters it holds.
struct LayerInfo {
  std::string name;
  std::string kind;
  std::string group;
  Shape output;
  std::vector<std::size_t> params;
};

/// Ordered layer list with the parameters and buffers they own. Parameter
/// groups are the unit of freezing and of per-group learning rates.
template <typename Scalar>
class NetworkGraph {
public:
  std::size_t add_parameter(std::string name, std::string group, Tensor<Scalar> value) {
    for (const auto &p : params_)
      if (p.name == name) throw std::logic_error("duplicate parameter name '" + name + "'");
    if (std::find(groups_.begin(), groups_.end(), group) == groups_.end()) groups_.push_back(group);
    params_.push_back(Parameter<Scalar>{std::move(name), std::move(group), std::move(value), {}, true});
    return params_.size() - 1;
  }

  std::size_t add_norm_stats(Index channels) {
    stats_.emplace_back(channels);
    return stats_.size() - 1;
  }

  void add_layer(LayerInfo layer) { layers_.push_back(std::move(layer)); }

  std::vector<Parameter<Scalar>> &parameters() { return params_; }
  const std::vector<Parameter<Scalar>> &parameters() const { return params_; }
  Parameter<Scalar> &parameter(std::size_t i) { return params_.at(i); }
  const Parameter<Scalar> &parameter(std::size_t i) const { return params_.at(i); }
  Parameter<Scalar> &parameter(const std::string &name) {
    for (auto &p : params_)
      if (p.name == name) return p;
    throw std::out_of_range("no parameter named '" + name + "'");
  }

  std::vector<NormStats<Scalar>> &norm_stats() { return stats_; }
  const std::vector<NormStats<Scalar>> &norm_stats() const { return stats_; }
  NormStats<Scalar> &norm_stats(std::size_t i) { return stats_.at(i); }

  const std::vector<LayerInfo> &layers() const { return layers_; }
  const std::vector<std::string> &groups() const { return groups_; }
  bool has_group(const std::string &group) const {
    return std::find(groups_.begin(), groups_.end(), group) != groups_.end();
  }

  std::vector<bool> trainable_mask() const {
    std::vector<bool> mask;
    for (const auto &p : params_) mask.push_back(p.trainable);
    return mask;
  }

  void zero_grad() {
    for (auto &p : params_) p.zero_grad();
  }

  /// Digest over parameter values, optionally restricted to one group.
  std::uint64_t checksum(const std::string &group = {}) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto &p : params_)
      if (group.empty() || p.group == group) h = docclf::checksum(p.value, h);
    return h;
  }

  /// Removes every parameter and layer of `group`; used before a head is
  /// rebuilt for a new class count. Parameter indices held elsewhere past
  /// the first removed one become stale.
  void drop_group(const std::string &group) {
    std::erase_if(params_, [&](const Parameter<Scalar> &p) { return p.group == group; });
    std::erase_if(layers_, [&](const LayerInfo &l) { return l.group == group; });
    std::erase(groups_, group);
  }

  /// Copies parameter values and running statistics into a checkpoint.
  void export_to(Checkpoint<Scalar> &ckpt) const {
    for (const auto &p : params_) ckpt.put(p.name, p.value);
    for (std::size_t i = 0; i < stats_.size(); ++i) {
      const Index c = stats_[i].mean.size();
      ckpt.put("stats." + std::to_string(i) + ".mean", Tensor<Scalar>({c}, stats_[i].mean));
      ckpt.put("stats." + std::to_string(i) + ".var", Tensor<Scalar>({c}, stats_[i].var));
    }
  }

  /// Loads values by name; shapes must agree. Parameters in `skip_groups`
  /// keep their current values.
  void import_from(const Checkpoint<Scalar> &ckpt, const std::set<std::string> &skip_groups = {}) {
    for (auto &p : params_) {
      if (skip_groups.count(p.group)) continue;
      const auto &t = ckpt.at(p.name);
      if (t.shape() != p.value.shape()) {
        throw FormatError("checkpoint tensor '" + p.name + "' has shape " + to_string(t.shape()) +
                          ", network expects " + to_string(p.value.shape()));
      }
      p.value = t;
    }
    for (std::size_t i = 0; i < stats_.size(); ++i) {
      stats_[i].mean = ckpt.at("stats." + std::to_string(i) + ".mean").array();
      stats_[i].var = ckpt.at("stats." + std::to_string(i) + ".var").array();
    }
  }

private:
  std::vector<Parameter<Scalar>> params_;
  std::vector<NormStats<Scalar>> stats_;
  std::vector<LayerInfo> layers_;
  std::vector<std::string> groups_;
};

/// Total element count over every parameter tensor.
template <typename Scalar>
Index count_params(const NetworkGraph<Scalar> &net) {
  Index n = 0;
  for (const auto &p : net.parameters()) n += p.value.size();
  return n;
}

template <typename Scalar>
Index count_trainable_params(const NetworkGraph<Scalar> &net) {
  Index n = 0;
  for (const auto &p : net.parameters())
    if (p.trainable) n += p.value.size();
  return n;
}

/// Binds every parameter of `net` as a leaf of `g`, in parameter order.
template <typename Scalar>
std::vector<Var<Scalar>> bind_parameters(Graph<Scalar> &g, NetworkGraph<Scalar> &net) {
  std::vector<Var<Scalar>> vars;
  vars.reserve(net.parameters().size());
  for (auto &p : net.parameters()) vars.push_back(g.parameter(p));
  return vars;
}

} // namespace docclf

#endif // DOCCLF_MODEL_NETWORK_HPP
