#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vlprobe/model/backend.hpp"

namespace vlprobe::explain {

struct RelevancyMap {
  std::vector<std::string> text_tokens;  // [CLS] w_1 .. w_n [SEP]
  std::vector<double> text_scores;       // aligned with text_tokens
  std::vector<double> roi_scores;        // one per ROI, input order
  model::RelevancyTarget target = model::RelevancyTarget::MaskedToken;
  std::size_t target_position = 0;       // sequence position of the readout
};

// Gradient-weighted attention rollout. Per layer,
//   A_bar = mean over heads of max(A * dA, 0)      (elementwise)
//   R     = R + A_bar * R,                          R starting at I.
// Returns R (seq_len x seq_len).
model::Tensor<double> rollout(const model::AttentionTrace& trace);

// Row `trace.target_position` of the rollout split into text and ROI parts.
RelevancyMap relevancy_from_trace(const model::AttentionTrace& trace, model::RelevancyTarget target,
                                  std::vector<std::string> text_tokens = {});

// Throws CapabilityError when the backend cannot expose attention.
RelevancyMap relevancy(const model::ModelBackend& backend, const VisualInput& image,
                       const std::vector<std::string>& words, std::size_t target_word, model::RelevancyTarget target);

}  // namespace vlprobe::explain
