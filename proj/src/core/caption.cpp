#include "vlprobe/core/caption.hpp"

#include <cctype>

#include "vlprobe/error.hpp"
#include "vlprobe/lexicon/lemmatizer.hpp"

namespace vlprobe {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

// Punctuation is dropped except apostrophes and hyphens joining two word
// characters ("don't", "t-shirt").
std::string normalize_word(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(raw[i]);
    if (is_word_char(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if ((c == '\'' || c == '-') && i > 0 && i + 1 < raw.size() &&
               is_word_char(static_cast<unsigned char>(raw[i - 1])) &&
               is_word_char(static_cast<unsigned char>(raw[i + 1]))) {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

}  // namespace

MaskedCaption::MaskedCaption(Caption base, std::size_t mask_index)
    : base_(std::move(base)), mask_index_(mask_index) {
  if (mask_index_ >= base_.size())
    fail(ErrorKind::BadIndex, "mask index " + std::to_string(mask_index_) + " out of range for caption of " +
                                  std::to_string(base_.size()) + " words");
}

std::vector<TokenId> MaskedCaption::tokens() const {
  auto out = base_.tokens;
  out[mask_index_] = Vocabulary::kMask;
  return out;
}

std::vector<std::string> MaskedCaption::words() const {
  auto out = base_.words;
  out[mask_index_] = "[MASK]";
  return out;
}

Caption tokenize(std::string_view raw, const Vocabulary& vocab) {
  Caption c;
  c.raw = std::string(raw);
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    std::size_t start = i;
    while (i < raw.size() && !std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    if (start == i) break;
    std::string word = normalize_word(raw.substr(start, i - start));
    if (word.empty()) continue;
    c.tokens.push_back(vocab.id(word));
    c.words.push_back(std::move(word));
  }
  if (c.words.empty()) fail(ErrorKind::EmptyCaption, "caption is empty after normalization");
  return c;
}

Caption retokenize(const Caption& caption, const Vocabulary& vocab) {
  Caption out = caption;
  for (std::size_t i = 0; i < out.words.size(); ++i) out.tokens[i] = vocab.id(out.words[i]);
  return out;
}

std::string detokenize(const Caption& caption) {
  std::string out;
  for (std::size_t i = 0; i < caption.words.size(); ++i) {
    if (i) out.push_back(' ');
    out += caption.words[i];
  }
  return out;
}

MaskedCaption mask_at(const Caption& caption, std::size_t i) { return MaskedCaption(caption, i); }

Caption unmask(const MaskedCaption& masked) { return masked.base(); }

std::size_t find_verb_index(const Caption& caption, std::optional<std::size_t> gold,
                            const lexicon::Lemmatizer& lemmatizer) {
  if (caption.words.empty()) fail(ErrorKind::EmptyCaption, "find_verb_index: empty caption");
  if (gold) {
    if (*gold >= caption.size()) fail(ErrorKind::BadIndex, "gold verb index out of range");
    return *gold;
  }
  for (std::size_t i = 1; i < caption.size(); ++i)
    if (lemmatizer.is_known_verb(lemmatizer.lemmatize(caption.words[i]))) return i;
  fail(ErrorKind::NoTargetWord, "no known verb in caption: " + detokenize(caption));
}

}  // namespace vlprobe
