#include "vlprobe/probing/itm.hpp"

#include <memory>

#include "vlprobe/error.hpp"
#include "vlprobe/probing/ablation.hpp"
#include "vlprobe/probing/parallel.hpp"

namespace vlprobe::probing {

std::string_view to_string(ItmAblation a) {
  switch (a) {
    case ItmAblation::None: return "none";
    case ItmAblation::Subject: return "subject";
    case ItmAblation::Whole: return "whole";
  }
  return "?";
}

ItmAblation parse_itm_ablation(std::string_view name) {
  for (auto a : {ItmAblation::None, ItmAblation::Subject, ItmAblation::Whole})
    if (to_string(a) == name) return a;
  fail(ErrorKind::UsageError, "unknown ITM ablation '" + std::string(name) + "' (expected none, subject or whole)");
}

ItmResult score_itm(std::span<const PairLabel> labels, std::span<const bool> predicted_match) {
  if (labels.size() != predicted_match.size()) fail(ErrorKind::ShapeError, "score_itm: label/prediction count mismatch");
  ItmResult r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == PairLabel::Positive) {
      ++r.n_pos;
      if (predicted_match[i]) ++r.correct_pos;
    } else {
      ++r.n_neg;
      if (!predicted_match[i]) ++r.correct_neg;
    }
  }
  const auto np = static_cast<double>(r.n_pos), nn = static_cast<double>(r.n_neg);
  r.acc_pos = r.n_pos ? static_cast<double>(r.correct_pos) / np : 0.0;
  r.acc_neg = r.n_neg ? static_cast<double>(r.correct_neg) / nn : 0.0;
  r.acc_avg = r.n_pos + r.n_neg ? (np * r.acc_pos + nn * r.acc_neg) / (np + nn) : 0.0;
  return r;
}

ItmResult run_itm(const std::vector<ProbeSample>& dataset, const model::ModelBackend& backend,
                  const ProbeConfig& config, ItmAblation ablation, const lexicon::Lexicon& lexicon) {
  config.validate();
  if (!backend.capabilities().itm) fail(ErrorKind::CapabilityError, "backend " + backend.name() + " has no ITM head");

  struct Cell {
    bool ok = false;
    bool match = false;
    bool fallback = false;
    std::string error;
  };
  std::vector<Cell> cells(dataset.size());
  parallel_for(dataset.size(), config.workers, [&](std::size_t i) {
    const auto& sample = dataset[i];
    Cell& cell = cells[i];
    try {
      double p = 0.0;
      switch (ablation) {
        case ItmAblation::None:
          p = model::itm_probability(backend, sample.image, sample.caption);
          break;
        case ItmAblation::Subject: {
          auto ablated = ablate_subject(sample, lexicon);
          cell.fallback = ablated.trace.fallback;
          p = model::itm_probability(backend, ablated.image, sample.caption);
          break;
        }
        case ItmAblation::Whole:
          p = model::itm_probability(backend, ablate_whole_image(sample.image), sample.caption);
          break;
      }
      cell.ok = true;
      cell.match = p >= config.itm_threshold;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::BackendError && e.kind() != ErrorKind::ShapeError) throw;
      cell.error = e.what();
    }
  });

  std::vector<PairLabel> labels;
  auto verdicts = std::make_unique<bool[]>(dataset.size());
  std::size_t skipped = 0, fallbacks = 0;
  const std::string* first_error = nullptr;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!cells[i].ok) {
      ++skipped;
      if (!first_error) first_error = &cells[i].error;
      continue;
    }
    verdicts[labels.size()] = cells[i].match;
    labels.push_back(dataset[i].pair_label);
    if (cells[i].fallback) ++fallbacks;
  }
  if (skipped > static_cast<std::size_t>(kMaxBackendErrorFraction * static_cast<double>(dataset.size())))
    fail(ErrorKind::BackendError, "itm: " + std::to_string(skipped) + " of " + std::to_string(dataset.size()) +
                                      " pairs failed in the backend; first error: " + *first_error);
  auto r = score_itm(labels, std::span<const bool>(verdicts.get(), labels.size()));
  r.ablation = std::string(to_string(ablation));
  r.n_skipped = skipped;
  r.fallback_subject_count = fallbacks;
  return r;
}

}  // namespace vlprobe::probing
