#ifndef DOCCLF_DATA_TOKENIZE_HPP
#define DOCCLF_DATA_TOKENIZE_HPP

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace docclf {

enum SpecialToken : std::int32_t { kPad = 0, kCls = 1, kSep = 2, kUnk = 3 };
constexpr std::int32_t kFirstContentToken = 4;

struct Encoded {
  std::vector<std::int32_t> ids;
  /// 1 for [CLS], content and [SEP]; 0 for padding.
  std::vector<std::uint8_t> mask;
};

/// [CLS] + content[: max_len - 2] + [SEP], padded to max_len.
Encoded tokenize(std::span<const std::int32_t> content, int max_len);

/// Fixed word-level lookup; unknown words map to [UNK].
class Vocabulary {
public:
  Vocabulary() = default;
  /// Word i gets id kFirstContentToken + i.
  explicit Vocabulary(const std::vector<std::string> &words);

  std::int32_t id(const std::string &word) const;
  std::size_t size() const { return kFirstContentToken + words_.size(); }
  const std::string &word(std::int32_t id) const;

  /// Splits on whitespace and looks up every word.
  std::vector<std::int32_t> encode(const std::string &text) const;

  /// Synthetic vocabulary "w4", "w5", ... covering ids up to vocab_size - 1.
  static Vocabulary synthetic(int vocab_size);

private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
};

Encoded tokenize(const std::string &text, const Vocabulary &vocab, int max_len);

} // namespace docclf

#endif // DOCCLF_DATA_TOKENIZE_HPP
