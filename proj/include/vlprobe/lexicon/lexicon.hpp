#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "vlprobe/lexicon/lemmatizer.hpp"
#include "vlprobe/lexicon/synset_graph.hpp"

namespace vlprobe::lexicon {

struct Lexicon {
  Lemmatizer lemmatizer;
  SynsetGraph graph;

  // Loads the lemmatizer tables and `synsets.tsv` from `dir`.
  static Lexicon load(const std::filesystem::path& dir);
  // The tables shipped under the project's data directory. Honors the
  // VLPROBE_DATA_DIR environment variable when set.
  static const Lexicon& builtin();
  static std::filesystem::path default_data_dir();
};

struct ScoredLabel {
  std::string label;
  double score = 0.0;
};

struct LabelMatch {
  std::size_t index = 0;
  double similarity = 0.0;
  bool fallback = false;  // no label was related to the subject at all
};

// Picks the detector label closest to `subject`. Ties go to the higher
// detector score, then the lower index. When every similarity is zero the
// highest-scoring label is returned with `fallback` set.
LabelMatch nearest_label(std::string_view subject, std::span<const ScoredLabel> labels,
                         const SynsetGraph& graph, const Lemmatizer& lemmatizer);

}  // namespace vlprobe::lexicon
