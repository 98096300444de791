#include "docclf/train/tasks.hpp"

#include <algorithm>

namespace docclf {

TextData prepare_text(const Corpus &corpus, int max_len) {
  TextData data;
  data.max_len = max_len;
  for (const auto &d : corpus.docs) {
    data.encoded.push_back(tokenize(std::span<const std::int32_t>(d.tokens), max_len));
    data.labels.push_back(d.label);
  }
  return data;
}

TokenBatch token_batch(const TextData &data, std::span<const std::size_t> ids) {
  TokenBatch batch;
  batch.batch = static_cast<Index>(ids.size());
  std::size_t longest = 2;
  for (auto i : ids) {
    const auto &m = data.encoded.at(i).mask;
    longest = std::max<std::size_t>(longest, static_cast<std::size_t>(std::count(m.begin(), m.end(), 1)));
  }
  batch.length = static_cast<Index>(longest);
  for (auto i : ids) {
    const auto &e = data.encoded[i];
    batch.ids.insert(batch.ids.end(), e.ids.begin(), e.ids.begin() + static_cast<std::ptrdiff_t>(longest));
    batch.mask.insert(batch.mask.end(), e.mask.begin(), e.mask.begin() + static_cast<std::ptrdiff_t>(longest));
  }
  return batch;
}

std::vector<int> labels_of(const std::vector<int> &labels, std::span<const std::size_t> ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(labels.at(i));
  return out;
}

} // namespace docclf
