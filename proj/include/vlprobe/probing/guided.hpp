#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vlprobe/core/dataset.hpp"
#include "vlprobe/lexicon/lexicon.hpp"
#include "vlprobe/model/backend.hpp"

namespace vlprobe::probing {

enum class Condition { Guided, SubjectAblation, WholeImage, TextOnly };

std::string_view to_string(Condition c);
// "guided", "subject_ablation", "whole_image", "text_only". Throws UsageError.
Condition parse_condition(std::string_view name);
// Comma-separated list, duplicates removed, canonical order kept.
std::vector<Condition> parse_conditions(std::string_view list);
std::string join_conditions(const std::vector<Condition>& conditions);

struct ProbeConfig {
  std::size_t k = 5;
  std::vector<Condition> conditions = {Condition::Guided, Condition::SubjectAblation, Condition::WholeImage,
                                       Condition::TextOnly};
  double itm_threshold = 0.5;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  // Throws UsageError.
  void validate() const;
};

struct ConditionResult {
  std::string condition;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
  std::size_t top_k_hits = 0;
  double accuracy = 0.0;
  std::size_t fallback_subject_count = 0;
  // Hits at several cutoffs (1, 5, 10 and k), so near-misses stay visible.
  std::map<std::size_t, std::size_t> hits_at;
  std::size_t skipped_no_target = 0;
  std::size_t skipped_backend = 0;
};

// Cutoffs reported in ConditionResult::hits_at for a given k.
std::vector<std::size_t> report_cutoffs(std::size_t k);

// Language-only prediction: the backend is shown no informative image.
model::PredictionDistribution text_only_predict(const model::ModelBackend& backend, const MaskedCaption& masked);

// Guided masking over the positive samples of `dataset`, one result per
// enabled condition in config order. Per-sample backend failures become skips;
// more than 1% of them aborts with BackendError.
std::vector<ConditionResult> run_guided_masking(const std::vector<ProbeSample>& dataset,
                                                const model::ModelBackend& backend, const ProbeConfig& config,
                                                const lexicon::Lexicon& lexicon);

inline constexpr double kMaxBackendErrorFraction = 0.01;

}  // namespace vlprobe::probing
