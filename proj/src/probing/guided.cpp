#include "vlprobe/probing/guided.hpp"

#include <algorithm>
#include <array>
#include <optional>

#include "vlprobe/error.hpp"
#include "vlprobe/probing/ablation.hpp"
#include "vlprobe/probing/match.hpp"
#include "vlprobe/probing/parallel.hpp"

namespace vlprobe::probing {

namespace {

constexpr std::array kAllConditions = {Condition::Guided, Condition::SubjectAblation, Condition::WholeImage,
                                       Condition::TextOnly};

enum class Outcome { Scored, NoTarget, BackendFailure };

struct Cell {
  Outcome outcome = Outcome::Scored;
  std::optional<std::size_t> rank;
  bool fallback = false;
  std::string error;
};

bool is_backend_failure(ErrorKind kind) {
  return kind == ErrorKind::BackendError || kind == ErrorKind::ShapeError;
}

}  // namespace

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Guided: return "guided";
    case Condition::SubjectAblation: return "subject_ablation";
    case Condition::WholeImage: return "whole_image";
    case Condition::TextOnly: return "text_only";
  }
  return "?";
}

Condition parse_condition(std::string_view name) {
  for (auto c : kAllConditions)
    if (to_string(c) == name) return c;
  fail(ErrorKind::UsageError, "unknown condition '" + std::string(name) +
                                  "' (expected guided, subject_ablation, whole_image or text_only)");
}

std::vector<Condition> parse_conditions(std::string_view list) {
  std::vector<bool> on(kAllConditions.size(), false);
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    auto item = list.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) on[static_cast<std::size_t>(parse_condition(item))] = true;
    start = end + 1;
  }
  std::vector<Condition> out;
  for (std::size_t i = 0; i < on.size(); ++i)
    if (on[i]) out.push_back(kAllConditions[i]);
  if (out.empty()) fail(ErrorKind::UsageError, "no probing condition selected");
  return out;
}

std::string join_conditions(const std::vector<Condition>& conditions) {
  std::string out;
  for (auto c : conditions) {
    if (!out.empty()) out += ',';
    out += to_string(c);
  }
  return out;
}

void ProbeConfig::validate() const {
  if (k == 0) fail(ErrorKind::UsageError, "k must be at least 1");
  if (conditions.empty()) fail(ErrorKind::UsageError, "no probing condition selected");
  if (!(itm_threshold >= 0.0 && itm_threshold <= 1.0)) fail(ErrorKind::UsageError, "itm_threshold must lie in [0,1]");
  if (workers == 0) fail(ErrorKind::UsageError, "workers must be at least 1");
}

std::vector<std::size_t> report_cutoffs(std::size_t k) {
  std::vector<std::size_t> ks = {1, 5, 10, k};
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

model::PredictionDistribution text_only_predict(const model::ModelBackend& backend, const MaskedCaption& masked) {
  if (!backend.capabilities().mlm) fail(ErrorKind::CapabilityError, "backend " + backend.name() + " has no MLM head");
  try {
    return backend.predict_text_only(masked);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::BackendError, backend.name() + ": " + e.what());
  }
}

std::vector<ConditionResult> run_guided_masking(const std::vector<ProbeSample>& dataset,
                                                const model::ModelBackend& backend, const ProbeConfig& config,
                                                const lexicon::Lexicon& lexicon) {
  config.validate();
  if (!backend.capabilities().mlm) fail(ErrorKind::CapabilityError, "backend " + backend.name() + " has no MLM head");

  std::vector<const ProbeSample*> positives;
  for (const auto& s : dataset)
    if (s.pair_label == PairLabel::Positive) positives.push_back(&s);

  const auto cutoffs = report_cutoffs(config.k);
  const std::size_t k_max = cutoffs.back();
  const std::size_t n_cond = config.conditions.size();
  std::vector<Cell> cells(positives.size() * n_cond);

  parallel_for(positives.size(), config.workers, [&](std::size_t i) {
    const ProbeSample& sample = *positives[i];
    Cell* row = &cells[i * n_cond];
    std::optional<MaskedCaption> masked;
    try {
      const auto target = find_verb_index(sample.caption, sample.target_index, lexicon.lemmatizer);
      masked.emplace(mask_at(sample.caption, target));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoTargetWord && e.kind() != ErrorKind::BadIndex) throw;
      for (std::size_t c = 0; c < n_cond; ++c) row[c].outcome = Outcome::NoTarget;
      return;
    }
    for (std::size_t c = 0; c < n_cond; ++c) {
      Cell& cell = row[c];
      try {
        std::optional<model::PredictionDistribution> dist;
        switch (config.conditions[c]) {
          case Condition::Guided:
            dist.emplace(model::predict_masked(backend, sample.image, *masked));
            break;
          case Condition::SubjectAblation: {
            auto ablated = ablate_subject(sample, lexicon);
            cell.fallback = ablated.trace.fallback;
            dist.emplace(model::predict_masked(backend, ablated.image, *masked));
            break;
          }
          case Condition::WholeImage:
            dist.emplace(model::predict_masked(backend, ablate_whole_image(sample.image), *masked));
            break;
          case Condition::TextOnly:
            dist.emplace(text_only_predict(backend, *masked));
            break;
        }
        cell.rank = match_rank(masked->original_word(), *dist, k_max, lexicon.lemmatizer);
      } catch (const Error& e) {
        if (!is_backend_failure(e.kind())) throw;
        cell.outcome = Outcome::BackendFailure;
        cell.error = e.what();
      }
    }
  });

  const auto allowed_failures = static_cast<std::size_t>(kMaxBackendErrorFraction * static_cast<double>(positives.size()));
  std::vector<ConditionResult> results;
  for (std::size_t c = 0; c < n_cond; ++c) {
    ConditionResult r;
    r.condition = std::string(to_string(config.conditions[c]));
    for (auto kc : cutoffs) r.hits_at[kc] = 0;
    const std::string* first_error = nullptr;
    for (std::size_t i = 0; i < positives.size(); ++i) {
      const Cell& cell = cells[i * n_cond + c];
      switch (cell.outcome) {
        case Outcome::NoTarget:
          ++r.skipped_no_target;
          continue;
        case Outcome::BackendFailure:
          ++r.skipped_backend;
          if (!first_error) first_error = &cell.error;
          continue;
        case Outcome::Scored:
          break;
      }
      ++r.n_evaluated;
      if (cell.fallback) ++r.fallback_subject_count;
      if (cell.rank) {
        for (auto kc : cutoffs)
          if (*cell.rank <= kc) ++r.hits_at[kc];
      }
    }
    if (r.skipped_backend > allowed_failures)
      fail(ErrorKind::BackendError, "condition " + r.condition + ": " + std::to_string(r.skipped_backend) + " of " +
                                        std::to_string(positives.size()) +
                                        " samples failed in the backend; first error: " + *first_error);
    r.n_skipped = r.skipped_no_target + r.skipped_backend;
    r.top_k_hits = r.hits_at[config.k];
    r.accuracy = r.n_evaluated ? static_cast<double>(r.top_k_hits) / static_cast<double>(r.n_evaluated) : 0.0;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace vlprobe::probing
