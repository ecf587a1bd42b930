#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vlprobe/core/caption.hpp"
#include "vlprobe/core/visual.hpp"

namespace vlprobe {

namespace lexicon {
class Lemmatizer;
}

enum class PairLabel { Positive, Negative };
enum class FoilKind { Subject, Verb, Object };

std::string to_string(PairLabel label);
std::string to_string(std::optional<FoilKind> kind);

struct ProbeSample {
  std::string id;
  VisualInput image;
  Caption caption;
  // Position of the probed word. Empty means "resolve with the verb lexicon".
  std::optional<std::size_t> target_index;
  std::string subject_word;
  PairLabel pair_label = PairLabel::Positive;
  std::optional<FoilKind> foil_kind;
  // SVO triplet fields when the source provides them.
  std::string verb;
  std::string object;
  // How the target was chosen: "gold", "activity" or "lexicon".
  std::string target_source = "gold";

  // Throws SchemaError when an invariant is violated.
  void validate() const;
};

struct LoadStats {
  std::size_t rows = 0;
  std::size_t malformed = 0;
  std::size_t unjoinable = 0;
  std::size_t no_verb = 0;
  std::size_t activity_targets = 0;
  std::size_t lexicon_targets = 0;
  std::vector<std::string> first_errors;  // up to 10 messages for diagnostics
};

struct LoadedDataset {
  std::vector<ProbeSample> samples;
  LoadStats stats;
};

inline constexpr double kMaxMalformedFraction = 0.10;
inline constexpr const char* kSvoHeader = "image_id\tcaption\tsubject\tverb\tobject\tpair_label\tfoil_kind";

// SVO-style TSV. ROI files are read from `roi_dir/<image_id>.roi`; by default
// `roi_dir` is the `rois` directory next to the TSV. Malformed rows are
// skipped and counted; more than 10% malformed raises CorruptDataset.
LoadedDataset load_svo_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                               const lexicon::Lemmatizer& lemmatizer,
                               std::optional<std::filesystem::path> roi_dir = std::nullopt);

// Writes `dataset.tsv` plus `rois/<image_id>.roi` under `dir`. Images shared
// between samples are written once.
void write_svo_dataset(const std::filesystem::path& dir, const std::vector<ProbeSample>& samples);

// COCO-style captions (`image_id<TAB>caption`, one caption per line, several
// per image allowed) joined with an optional activity file
// (`image_id<TAB>act1,act2,...`) and per-image ROI files in `roi_dir`. Both
// files start with a header line.
// A caption word matching an activity lemma is the target; otherwise the
// first lexicon verb. Captions without any verb are dropped and counted.
LoadedDataset load_coco_captions(const std::filesystem::path& caption_path,
                                 const std::optional<std::filesystem::path>& activity_path,
                                 const std::filesystem::path& roi_dir, const Vocabulary& vocab,
                                 const lexicon::Lemmatizer& lemmatizer);

}  // namespace vlprobe
