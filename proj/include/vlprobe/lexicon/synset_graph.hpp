#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vlprobe::lexicon {

struct SynsetEntry {
  std::string id;
  std::vector<std::string> lemmas;
  std::string parent;  // empty for the root
};

// Hypernym tree over synsets. Each synset names one parent, so the undirected
// hypernym/hyponym graph is a tree and shortest paths run through the lowest
// common ancestor.
class SynsetGraph {
 public:
  explicit SynsetGraph(std::vector<SynsetEntry> entries);

  // Line format: `synset_id<TAB>lemma1,lemma2,...<TAB>parent_synset_id`.
  // The root uses `-` (or an empty field) as its parent.
  static SynsetGraph parse(std::istream& in);
  static SynsetGraph load(const std::filesystem::path& path);

  std::size_t size() const { return entries_.size(); }
  std::size_t root() const { return root_; }
  const SynsetEntry& entry(std::size_t node) const { return entries_[node]; }
  std::optional<std::size_t> parent(std::size_t node) const;
  std::size_t depth(std::size_t node) const { return depth_[node]; }
  std::optional<std::size_t> find(std::string_view synset_id) const;

  // Synsets listing `lemma`; empty when the lemma is unknown.
  const std::vector<std::size_t>& synsets_of(std::string_view lemma) const;
  bool has_lemma(std::string_view lemma) const { return !synsets_of(lemma).empty(); }
  std::vector<std::string> lemmas() const;

  std::size_t path_length(std::size_t a, std::size_t b) const;

  // max over synset pairs of 1 / (1 + shortest path length); 0 when either
  // lemma is absent.
  double similarity(std::string_view a, std::string_view b) const;

 private:
  std::vector<SynsetEntry> entries_;
  std::vector<std::optional<std::size_t>> parent_;
  std::vector<std::size_t> depth_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_lemma_;
  std::size_t root_ = 0;
};

}  // namespace vlprobe::lexicon
