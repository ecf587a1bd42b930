#include "vlprobe/lexicon/lemmatizer.hpp"

#include <fstream>

#include "vlprobe/error.hpp"

namespace vlprobe::lexicon {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return in;
}

}  // namespace

const std::vector<SuffixRule>& Lemmatizer::default_suffix_rules() {
  static const std::vector<SuffixRule> rules = {
      {"ies", "y"},   {"ied", "y"},   {"ying", "ie"}, {"sses", "ss"}, {"shes", "sh"},
      {"ches", "ch"}, {"xes", "x"},   {"zes", "z"},   {"oes", "o"},   {"s", ""},
      {"bbing", "b"}, {"dding", "d"}, {"gging", "g"}, {"mming", "m"}, {"nning", "n"},
      {"pping", "p"}, {"rring", "r"}, {"tting", "t"}, {"zzing", "z"}, {"ing", ""},
      {"ing", "e"},   {"bbed", "b"},  {"dded", "d"},  {"gged", "g"},  {"mmed", "m"},
      {"nned", "n"},  {"pped", "p"},  {"rred", "r"},  {"tted", "t"},  {"ed", ""},
      {"ed", "e"},
  };
  return rules;
}

Lemmatizer::Lemmatizer(std::unordered_map<std::string, std::string> irregular,
                       std::vector<SuffixRule> suffix_rules,
                       std::unordered_set<std::string> known_lemmas,
                       std::unordered_set<std::string> verb_lemmas, std::size_t min_stem_len)
    : irregular_(std::move(irregular)),
      rules_(std::move(suffix_rules)),
      known_(std::move(known_lemmas)),
      verbs_(std::move(verb_lemmas)),
      min_stem_len_(min_stem_len) {
  for (const auto& v : verbs_) known_.insert(v);
  for (const auto& [surface, lemma] : irregular_) {
    if (lemma.empty()) fail(ErrorKind::SchemaError, "irregular table: empty lemma for " + surface);
    auto chained = irregular_.find(lemma);
    if (chained != irregular_.end() && chained->second != lemma)
      fail(ErrorKind::SchemaError, "irregular table: lemma '" + lemma + "' is itself mapped to '" +
                                       chained->second + "'");
    known_.insert(lemma);
  }
}

Lemmatizer Lemmatizer::load(const std::filesystem::path& dir) {
  auto irregular = read_irregular_table(dir / "irregular_verbs.tsv");
  std::unordered_set<std::string> verbs;
  for (auto& w : read_word_list(dir / "verbs.txt")) verbs.insert(std::move(w));
  std::unordered_set<std::string> known;
  for (auto& w : read_word_list(dir / "nouns.txt")) known.insert(std::move(w));
  // Irregular lemmas are verbs by construction of the table.
  for (const auto& [surface, lemma] : irregular) verbs.insert(lemma);
  return Lemmatizer(std::move(irregular), default_suffix_rules(), std::move(known), std::move(verbs));
}

std::string Lemmatizer::lemmatize(std::string_view word) const {
  std::string w(word);
  if (w.empty()) return w;
  if (auto it = irregular_.find(w); it != irregular_.end()) return it->second;
  if (known_.contains(w)) return w;
  for (const auto& rule : rules_) {
    if (w.size() < rule.suffix.size() + min_stem_len_) continue;
    if (w.compare(w.size() - rule.suffix.size(), rule.suffix.size(), rule.suffix) != 0) continue;
    std::string candidate = w.substr(0, w.size() - rule.suffix.size()) + rule.replacement;
    if (known_.contains(candidate)) return candidate;
  }
  return w;
}

bool Lemmatizer::is_known_lemma(std::string_view lemma) const { return known_.contains(std::string(lemma)); }

bool Lemmatizer::is_known_verb(std::string_view lemma) const { return verbs_.contains(std::string(lemma)); }

std::unordered_map<std::string, std::string> read_irregular_table(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::unordered_map<std::string, std::string> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto tab = view.find('\t');
    if (tab == std::string_view::npos)
      fail(ErrorKind::SchemaError, path.string() + ":" + std::to_string(line_no) + ": expected surface<TAB>lemma");
    auto surface = trim(view.substr(0, tab));
    auto lemma = trim(view.substr(tab + 1));
    if (surface.empty() || lemma.empty())
      fail(ErrorKind::SchemaError, path.string() + ":" + std::to_string(line_no) + ": empty field");
    table[std::string(surface)] = std::string(lemma);
  }
  return table;
}

std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    words.emplace_back(view);
  }
  return words;
}

}  // namespace vlprobe::lexicon
