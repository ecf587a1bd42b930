#pragma once

#include <cstddef>
#include <vector>

#include "vlprobe/core/dataset.hpp"
#include "vlprobe/lexicon/lexicon.hpp"

namespace vlprobe::probing {

struct AblationTrace {
  std::size_t subject_index = 0;
  double similarity = 0.0;
  bool fallback = false;
  std::vector<std::size_t> zeroed;  // ascending ROI indices
};

struct SubjectAblation {
  VisualInput image;
  AblationTrace trace;
};

// Zeroes the features of the ROI whose label is nearest to the subject word
// and of every ROI overlapping it with positive area. Boxes, labels, scores
// and order are kept.
SubjectAblation ablate_subject(const VisualInput& image, std::string_view subject_word, const lexicon::Lexicon& lexicon);
SubjectAblation ablate_subject(const ProbeSample& sample, const lexicon::Lexicon& lexicon);

VisualInput ablate_whole_image(VisualInput image);

}  // namespace vlprobe::probing
