#include "vlprobe/probing/ablation.hpp"

#include <algorithm>

namespace vlprobe::probing {

SubjectAblation ablate_subject(const VisualInput& image, std::string_view subject_word, const lexicon::Lexicon& lexicon) {
  std::vector<lexicon::ScoredLabel> labels;
  labels.reserve(image.rois.size());
  for (const auto& roi : image.rois) labels.push_back({roi.label, roi.score});

  SubjectAblation out{image, {}};
  if (image.rois.empty()) return out;
  const auto match = lexicon::nearest_label(subject_word, labels, lexicon.graph, lexicon.lemmatizer);
  out.trace.subject_index = match.index;
  out.trace.similarity = match.similarity;
  out.trace.fallback = match.fallback;
  const BBox subject_box = image.rois[match.index].bbox;
  for (std::size_t i = 0; i < out.image.rois.size(); ++i) {
    auto& roi = out.image.rois[i];
    if (i == match.index || intersects(roi.bbox, subject_box)) {
      std::fill(roi.feature.begin(), roi.feature.end(), 0.0f);
      out.trace.zeroed.push_back(i);
    }
  }
  return out;
}

SubjectAblation ablate_subject(const ProbeSample& sample, const lexicon::Lexicon& lexicon) {
  return ablate_subject(sample.image, sample.subject_word, lexicon);
}

VisualInput ablate_whole_image(VisualInput image) {
  for (auto& roi : image.rois) std::fill(roi.feature.begin(), roi.feature.end(), 0.0f);
  return image;
}

}  // namespace vlprobe::probing
