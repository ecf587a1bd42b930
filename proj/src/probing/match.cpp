#include "vlprobe/probing/match.hpp"

#include "vlprobe/error.hpp"

namespace vlprobe::probing {

std::optional<std::size_t> match_rank(std::string_view original, const model::PredictionDistribution& dist,
                                      std::size_t k_max, const lexicon::Lemmatizer& lemmatizer) {
  const std::string gold = lemmatizer.lemmatize(original);
  const auto top = dist.top_k(k_max);
  for (std::size_t r = 0; r < top.size(); ++r)
    if (lemmatizer.lemmatize(dist.vocab().token(top[r])) == gold) return r + 1;
  return std::nullopt;
}

bool match_prediction(std::string_view original, const model::PredictionDistribution& dist, std::size_t k,
                      const lexicon::Lemmatizer& lemmatizer) {
  if (k == 0) fail(ErrorKind::UsageError, "top-k cutoff must be at least 1");
  return match_rank(original, dist, k, lemmatizer).has_value();
}

}  // namespace vlprobe::probing
