#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vlprobe {

using TokenId = std::uint32_t;

// Closed word-level vocabulary. The first five slots are reserved and fixed.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kCls = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kMask = 4;
  static constexpr std::size_t kNumReserved = 5;

  Vocabulary();
  // Appends `words` after the reserved block. Words must be lowercase,
  // nonempty and unique; violations raise SchemaError.
  explicit Vocabulary(std::span<const std::string> words);

  TokenId id(std::string_view word) const;  // kUnk when absent
  bool contains(std::string_view word) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // [PAD], [CLS], [SEP] and [MASK] never count as predictions.
  static bool excluded_from_ranking(TokenId id) {
    return id == kPad || id == kCls || id == kSep || id == kMask;
  }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId, Hash, std::equal_to<>> index_;
};

}  // namespace vlprobe
