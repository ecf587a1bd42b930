#include "vlprobe/core/vocabulary.hpp"

#include <algorithm>
#include <cctype>

#include "vlprobe/error.hpp"

namespace vlprobe {

namespace {

const char* const kReserved[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* r : kReserved) {
    index_.emplace(r, static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(r);
  }
}

Vocabulary::Vocabulary(std::span<const std::string> words) : Vocabulary() {
  tokens_.reserve(kNumReserved + words.size());
  for (const auto& w : words) {
    if (w.empty()) fail(ErrorKind::SchemaError, "vocabulary: empty token");
    if (std::any_of(w.begin(), w.end(), [](unsigned char c) { return std::isupper(c); }))
      fail(ErrorKind::SchemaError, "vocabulary: token not lowercase: " + w);
    auto [it, inserted] = index_.emplace(w, static_cast<TokenId>(tokens_.size()));
    if (!inserted) fail(ErrorKind::SchemaError, "vocabulary: duplicate token: " + w);
    tokens_.push_back(w);
  }
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.find(word) != index_.end(); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) fail(ErrorKind::BadIndex, "vocabulary: token id out of range");
  return tokens_[id];
}

}  // namespace vlprobe
