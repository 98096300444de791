#include "docclf/data/tokenize.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace docclf {

Encoded tokenize(std::span<const std::int32_t> content, int max_len) {
  if (max_len < 2) throw std::invalid_argument("tokenize: max_len must be >= 2");
  const std::size_t keep = std::min(content.size(), static_cast<std::size_t>(max_len - 2));
  Encoded out;
  out.ids.assign(static_cast<std::size_t>(max_len), kPad);
  out.mask.assign(static_cast<std::size_t>(max_len), 0);
  out.ids[0] = kCls;
  std::copy_n(content.begin(), keep, out.ids.begin() + 1);
  out.ids[keep + 1] = kSep;
  std::fill_n(out.mask.begin(), keep + 2, std::uint8_t{1});
  return out;
}

Vocabulary::Vocabulary(const std::vector<std::string> &words) : words_(words) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], kFirstContentToken + static_cast<std::int32_t>(i)).second)
      throw std::invalid_argument("vocabulary: duplicate word '" + words_[i] + "'");
  }
}

std::int32_t Vocabulary::id(const std::string &word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string &Vocabulary::word(std::int32_t id) const {
  static const std::string specials[] = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};
  if (id >= 0 && id < kFirstContentToken) return specials[id];
  const auto i = static_cast<std::size_t>(id - kFirstContentToken);
  if (i >= words_.size()) throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  return words_[i];
}

std::vector<std::int32_t> Vocabulary::encode(const std::string &text) const {
  std::istringstream in(text);
  std::vector<std::int32_t> ids;
  for (std::string w; in >> w;) ids.push_back(id(w));
  return ids;
}

Vocabulary Vocabulary::synthetic(int vocab_size) {
  std::vector<std::string> words;
  for (int i = kFirstContentToken; i < vocab_size; ++i) words.push_back("w" + std::to_string(i));
  return Vocabulary(words);
}

Encoded tokenize(const std::string &text, const Vocabulary &vocab, int max_len) {
  const auto ids = vocab.encode(text);
  return tokenize(std::span<const std::int32_t>(ids), max_len);
}

} // namespace docclf
