#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vlprobe/core/vocabulary.hpp"

namespace vlprobe {

namespace lexicon {
class Lemmatizer;
}

// Tokenized caption C = {w_1 .. w_n}. `tokens` is aligned with `words`; the
// [CLS]/[SEP] frame is added by the model, not stored here.
struct Caption {
  std::string raw;
  std::vector<std::string> words;
  std::vector<TokenId> tokens;

  std::size_t size() const { return words.size(); }
  bool operator==(const Caption&) const = default;
};

// Caption with one position replaced by [MASK].
class MaskedCaption {
 public:
  MaskedCaption(Caption base, std::size_t mask_index);

  const Caption& base() const { return base_; }
  std::size_t mask_index() const { return mask_index_; }
  const std::string& original_word() const { return base_.words[mask_index_]; }

  // Token ids with [MASK] at mask_index.
  std::vector<TokenId> tokens() const;
  // Surface words with "[MASK]" at mask_index.
  std::vector<std::string> words() const;

 private:
  Caption base_;
  std::size_t mask_index_;
};

// Lowercases, strips punctuation and splits on whitespace. Out-of-vocabulary
// words map to [UNK] but keep their surface form. Throws EmptyCaption when
// nothing survives normalization.
Caption tokenize(std::string_view raw, const Vocabulary& vocab);

// Re-tokenizes already-split words (used when a backend has its own vocabulary).
Caption retokenize(const Caption& caption, const Vocabulary& vocab);

std::string detokenize(const Caption& caption);

// Throws BadIndex when i >= caption.size().
MaskedCaption mask_at(const Caption& caption, std::size_t i);
Caption unmask(const MaskedCaption& masked);

// The gold index when supplied (and in range); otherwise the first word past
// position 0 whose lemma is a known verb. Throws NoTargetWord.
std::size_t find_verb_index(const Caption& caption, std::optional<std::size_t> gold,
                            const lexicon::Lemmatizer& lemmatizer);

}  // namespace vlprobe
