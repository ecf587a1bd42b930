#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vlprobe/core/dataset.hpp"
#include "vlprobe/core/vocabulary.hpp"

namespace vlprobe::model {

// Controls the synthetic grounded corpus. Captions read
// "<subject> <verb> <object>"; the verb can only be recovered from the pose
// channels of the subject ROI, so a text-only predictor is stuck at the
// uniform prior over the subject's verbs.
struct SyntheticCorpusSpec {
  std::size_t n_subjects = 12;
  std::size_t n_verbs_per_subject = 8;
  std::size_t n_objects = 12;
  std::size_t n_distractor_rois = 3;
  std::size_t d_v = 32;
  std::size_t pose_offset = 16;  // pose channels are [pose_offset, pose_offset + pose_width)
  std::size_t pose_width = 16;
  std::size_t n_samples = 5000;  // rounded up to a multiple of n_verbs_per_subject
  // Fixes the world: vocabulary, subject/verb assignment, label and pose codes.
  std::uint64_t seed = 1;
  // Fixes which samples are drawn from that world (held-out sets use another
  // sample_seed with the same seed).
  std::uint64_t sample_seed = 1;
  double identity_noise = 0.1;

  // Throws UsageError when the spec cannot produce a grounded corpus.
  void validate() const;
};

struct VerbEntry {
  std::string lemma;
  std::string third_person;
  std::string past;
  std::string progressive;
  std::string caption_form;  // the form used in generated captions
};

// Everything fixed by SyntheticCorpusSpec::seed.
struct SyntheticWorld {
  SyntheticCorpusSpec spec;
  std::shared_ptr<const Vocabulary> vocab;
  std::vector<std::string> subjects;
  std::vector<std::string> objects;
  std::vector<std::string> distractor_labels;
  std::vector<VerbEntry> verbs;
  std::vector<std::vector<std::size_t>> verbs_of_subject;  // indices into verbs
  std::vector<std::vector<float>> verb_codes;              // pose_width each

  std::size_t verb_index(const std::string& lemma) const;
  std::vector<float> label_code(const std::string& label) const;
};

struct SyntheticCorpus {
  SyntheticWorld world;
  std::vector<ProbeSample> samples;
};

// Word pools the world draws from. The vocabulary always contains every pool
// word, every verb form and a few function words, independent of the spec.
const std::vector<VerbEntry>& verb_pool();
const std::vector<std::string>& subject_pool();
const std::vector<std::string>& object_pool();
const std::vector<std::string>& distractor_pool();
std::vector<std::string> synthetic_vocabulary_words();

SyntheticWorld make_world(const SyntheticCorpusSpec& spec);
SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec);

// Verb-swap foil: same image, the caption's verb replaced by another verb of
// the same subject. Returns a negative sample with foil_kind = verb.
ProbeSample make_verb_foil(const SyntheticWorld& world, const ProbeSample& positive, std::mt19937_64& rng);

// Balanced ITM set: every positive plus one verb-swapped negative each.
std::vector<ProbeSample> make_itm_set(const SyntheticCorpus& corpus, std::uint64_t seed);

}  // namespace vlprobe::model
