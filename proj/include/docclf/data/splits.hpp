#ifndef DOCCLF_DATA_SPLITS_HPP
#define DOCCLF_DATA_SPLITS_HPP

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace docclf {

struct SplitProtocol {
  int n_splits = 10;
  int train_size = 800;
  int val_size = 200;
  /// Documents of every class in train + val.
  int per_class_quota = 100;
  std::uint64_t seed = 0;

  void validate(int num_classes) const;
};

struct SplitPlan {
  int split_id = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train, val, test;
};

/// For each split: draw `per_class_quota` documents of every class into a
/// pool, shuffle the pool into train then val, and leave the rest as test.
/// Throws naming the first class with too few documents.
std::vector<SplitPlan> make_splits(const std::vector<int> &labels, int num_classes, const SplitProtocol &protocol);

nlohmann::json to_json(const SplitPlan &plan);
SplitPlan split_plan_from_json(const nlohmann::json &j);

} // namespace docclf

#endif // DOCCLF_DATA_SPLITS_HPP
