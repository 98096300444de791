#include "docclf/data/splits.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace docclf {

namespace {

std::uint64_t split_seed(std::uint64_t seed, int split_id) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(split_id + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename T>
void shuffle(std::vector<T> &v, std::mt19937_64 &rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
}

} // namespace

void SplitProtocol::validate(int num_classes) const {
  if (n_splits < 1) throw std::invalid_argument("splits: n_splits must be >= 1");
  if (train_size < 1 || val_size < 0) throw std::invalid_argument("splits: train_size must be >= 1, val_size >= 0");
  if (per_class_quota < 1) throw std::invalid_argument("splits: per_class_quota must be >= 1");
  if (static_cast<long>(train_size) + val_size != static_cast<long>(num_classes) * per_class_quota) {
    throw std::invalid_argument("splits: train_size + val_size (" + std::to_string(train_size + val_size) +
                                ") must equal num_classes * per_class_quota (" +
                                std::to_string(num_classes * per_class_quota) + ")");
  }
}

std::vector<SplitPlan> make_splits(const std::vector<int> &labels, int num_classes, const SplitProtocol &protocol) {
  protocol.validate(num_classes);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("splits: label " + std::to_string(labels[i]) + " out of range");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (int c = 0; c < num_classes; ++c) {
    const auto have = by_class[static_cast<std::size_t>(c)].size();
    if (have < static_cast<std::size_t>(protocol.per_class_quota)) {
      throw std::invalid_argument("splits: class " + std::to_string(c) + " has " + std::to_string(have) +
                                  " documents, quota needs " + std::to_string(protocol.per_class_quota));
    }
  }

  std::vector<SplitPlan> plans;
  for (int s = 0; s < protocol.n_splits; ++s) {
    SplitPlan plan;
    plan.split_id = s;
    plan.seed = split_seed(protocol.seed, s);
    std::mt19937_64 rng(plan.seed);
    std::vector<std::uint8_t> in_pool(labels.size(), 0);
    std::vector<std::size_t> pool;
    for (auto members : by_class) {
      shuffle(members, rng);
      for (int q = 0; q < protocol.per_class_quota; ++q) {
        pool.push_back(members[static_cast<std::size_t>(q)]);
        in_pool[members[static_cast<std::size_t>(q)]] = 1;
      }
    }
    shuffle(pool, rng);
    plan.train.assign(pool.begin(), pool.begin() + protocol.train_size);
    plan.val.assign(pool.begin() + protocol.train_size, pool.end());
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (!in_pool[i]) plan.test.push_back(i);
    plans.push_back(std::move(plan));
  }
  return plans;
}

nlohmann::json to_json(const SplitPlan &plan) {
  return {{"split_id", plan.split_id}, {"seed", plan.seed}, {"train", plan.train}, {"val", plan.val},
          {"test", plan.test}};
}

SplitPlan split_plan_from_json(const nlohmann::json &j) {
  SplitPlan plan;
  plan.split_id = j.at("split_id").get<int>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.train = j.at("train").get<std::vector<std::size_t>>();
  plan.val = j.at("val").get<std::vector<std::size_t>>();
  plan.test = j.at("test").get<std::vector<std::size_t>>();
  return plan;
}

} // namespace docclf
