#include "vlprobe/lexicon/lexicon.hpp"

#include <cstdlib>

namespace vlprobe::lexicon {

Lexicon Lexicon::load(const std::filesystem::path& dir) {
  return Lexicon{Lemmatizer::load(dir), SynsetGraph::load(dir / "synsets.tsv")};
}

std::filesystem::path Lexicon::default_data_dir() {
  if (const char* env = std::getenv("VLPROBE_DATA_DIR"); env && *env) return std::filesystem::path(env) / "lexicon";
  return std::filesystem::path(VLPROBE_DATA_DIR) / "lexicon";
}

const Lexicon& Lexicon::builtin() {
  static const Lexicon lexicon = load(default_data_dir());
  return lexicon;
}

LabelMatch nearest_label(std::string_view subject, std::span<const ScoredLabel> labels,
                         const SynsetGraph& graph, const Lemmatizer& lemmatizer) {
  LabelMatch best;
  if (labels.empty()) return best;
  const std::string subject_lemma = lemmatizer.lemmatize(subject);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double sim = graph.similarity(subject_lemma, lemmatizer.lemmatize(labels[i].label));
    bool better = i == 0 || sim > best.similarity ||
                  (sim == best.similarity && labels[i].score > labels[best.index].score);
    if (better) {
      best.index = i;
      best.similarity = sim;
    }
  }
  best.fallback = best.similarity == 0.0;
  return best;
}

}  // namespace vlprobe::lexicon
