#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include "vlprobe/lexicon/lemmatizer.hpp"
#include "vlprobe/model/backend.hpp"

namespace vlprobe::probing {

// 1-based rank of the first top-`k_max` prediction whose lemma equals the
// lemma of `original`, or nullopt.
std::optional<std::size_t> match_rank(std::string_view original, const model::PredictionDistribution& dist,
                                      std::size_t k_max, const lexicon::Lemmatizer& lemmatizer);

// Lemmatized top-k hit. Throws UsageError for k == 0.
bool match_prediction(std::string_view original, const model::PredictionDistribution& dist, std::size_t k,
                      const lexicon::Lemmatizer& lemmatizer);

}  // namespace vlprobe::probing
