#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace vlprobe::lexicon {

struct SuffixRule {
  std::string suffix;
  std::string replacement;
};

// Rule-based English lemmatizer.
//
// Lookup order: the irregular table, then the known-lemma list (known lemmas
// are fixed points, which makes the mapping idempotent), then the suffix
// rules in declared order. A rule fires only when the stripped stem keeps at
// least `min_stem_len` characters and the rewritten word is a known lemma.
// Anything else maps to itself.
class Lemmatizer {
 public:
  Lemmatizer(std::unordered_map<std::string, std::string> irregular,
             std::vector<SuffixRule> suffix_rules,
             std::unordered_set<std::string> known_lemmas,
             std::unordered_set<std::string> verb_lemmas,
             std::size_t min_stem_len = 2);

  // Reads `irregular_verbs.tsv`, `verbs.txt` and `nouns.txt` from `dir`.
  static Lemmatizer load(const std::filesystem::path& dir);

  static const std::vector<SuffixRule>& default_suffix_rules();

  std::string lemmatize(std::string_view word) const;

  bool is_known_lemma(std::string_view lemma) const;
  bool is_known_verb(std::string_view lemma) const;

  const std::unordered_map<std::string, std::string>& irregular() const { return irregular_; }
  const std::unordered_set<std::string>& known_lemmas() const { return known_; }
  const std::unordered_set<std::string>& verb_lemmas() const { return verbs_; }

 private:
  std::unordered_map<std::string, std::string> irregular_;
  std::vector<SuffixRule> rules_;
  std::unordered_set<std::string> known_;
  std::unordered_set<std::string> verbs_;
  std::size_t min_stem_len_;
};

// Parses `surface<TAB>lemma` lines; blank lines and `#` comments are skipped.
std::unordered_map<std::string, std::string> read_irregular_table(const std::filesystem::path& path);
// One word per line; blank lines and `#` comments are skipped.
std::vector<std::string> read_word_list(const std::filesystem::path& path);

}  // namespace vlprobe::lexicon
