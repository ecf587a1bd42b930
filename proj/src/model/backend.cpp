#include "vlprobe/model/backend.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vlprobe/error.hpp"

namespace vlprobe::model {

PredictionDistribution::PredictionDistribution(std::shared_ptr<const Vocabulary> vocab, std::vector<double> probs)
    : vocab_(std::move(vocab)), probs_(std::move(probs)) {
  if (!vocab_ || probs_.size() != vocab_->size())
    fail(ErrorKind::BackendError, "prediction: distribution size does not match the vocabulary");
  double sum = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) fail(ErrorKind::BackendError, "prediction: negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance)
    fail(ErrorKind::BackendError, "prediction: probabilities sum to " + std::to_string(sum));
}

std::vector<TokenId> PredictionDistribution::top_k(std::size_t k) const {
  std::vector<TokenId> ids;
  ids.reserve(probs_.size());
  for (TokenId i = 0; i < probs_.size(); ++i)
    if (!Vocabulary::excluded_from_ranking(i)) ids.push_back(i);
  k = std::min(k, ids.size());
  auto better = [&](TokenId a, TokenId b) { return probs_[a] > probs_[b] || (probs_[a] == probs_[b] && a < b); };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), better);
  ids.resize(k);
  return ids;
}

VisualInput blank_image(std::size_t feature_dim) {
  VisualInput image;
  image.image_id = "blank";
  RoiFeature roi;
  roi.bbox = {0.0, 0.0, 1.0, 1.0};
  roi.feature.assign(feature_dim, 0.0f);
  roi.label = "none";
  roi.score = 0.0;
  image.rois.push_back(std::move(roi));
  return image;
}

PredictionDistribution ModelBackend::predict_text_only(const MaskedCaption& masked) const {
  return predict_masked(blank_image(feature_dim() ? feature_dim() : 1), masked);
}

AttentionTrace ModelBackend::attention_trace(const VisualInput&, const std::vector<std::string>&, std::size_t,
                                             RelevancyTarget) const {
  fail(ErrorKind::CapabilityError, "backend " + name() + " does not expose attention");
}

PredictionDistribution predict_masked(const ModelBackend& backend, const VisualInput& image, const MaskedCaption& masked) {
  if (!backend.capabilities().mlm) fail(ErrorKind::CapabilityError, "backend " + backend.name() + " has no MLM head");
  try {
    return backend.predict_masked(image, masked);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::BackendError, backend.name() + ": " + e.what());
  }
}

double itm_probability(const ModelBackend& backend, const VisualInput& image, const Caption& caption) {
  if (!backend.capabilities().itm) fail(ErrorKind::CapabilityError, "backend " + backend.name() + " has no ITM head");
  double p = 0.0;
  try {
    p = backend.itm_probability(image, caption);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::BackendError, backend.name() + ": " + e.what());
  }
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::BackendError, backend.name() + ": ITM probability outside [0,1]");
  return p;
}

}  // namespace vlprobe::model
