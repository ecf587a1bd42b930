#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vlprobe/core/dataset.hpp"
#include "vlprobe/lexicon/lexicon.hpp"
#include "vlprobe/model/backend.hpp"
#include "vlprobe/probing/guided.hpp"

namespace vlprobe::probing {

enum class ItmAblation { None, Subject, Whole };

std::string_view to_string(ItmAblation a);
// "none", "subject", "whole". Throws UsageError.
ItmAblation parse_itm_ablation(std::string_view name);

struct ItmResult {
  std::string ablation = "none";
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t correct_pos = 0;
  std::size_t correct_neg = 0;
  double acc_pos = 0.0;
  double acc_neg = 0.0;
  // (n_pos * acc_pos + n_neg * acc_neg) / (n_pos + n_neg)
  double acc_avg = 0.0;
  std::size_t n_skipped = 0;
  std::size_t fallback_subject_count = 0;
};

// Scores labelled match decisions. `predicted_match[i]` is the classifier's
// verdict for a pair with label `labels[i]`.
ItmResult score_itm(std::span<const PairLabel> labels, std::span<const bool> predicted_match);

// Image-text matching over positives and negatives: a pair is called a match
// when itm_probability >= config.itm_threshold.
ItmResult run_itm(const std::vector<ProbeSample>& dataset, const model::ModelBackend& backend,
                  const ProbeConfig& config, ItmAblation ablation, const lexicon::Lexicon& lexicon);

}  // namespace vlprobe::probing
