#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "vlprobe/model/corpus.hpp"
#include "vlprobe/model/params.hpp"

namespace vlprobe::model {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t steps = 10000;
  std::size_t batch = 32;
  double mlm_mask_prob = 0.15;
  // Share of full-view pairs used for ITM (unmasked) instead of MLM.
  double itm_pair_prob = 0.5;
  double itm_neg_prob = 0.5;
  // Probability that a training pair has its visual input degraded (whole
  // image zeroed, subject ROI zeroed, or replaced by one blank ROI). Degraded
  // pairs contribute MLM loss only.
  double feature_drop_prob = 0.3;
  std::uint64_t seed = 7;
};

template <typename T>
struct AdamState {
  Params<T> m;
  Params<T> v;
  std::uint64_t step = 0;

  static AdamState zeros(const ModelConfig& config) { return {Params<T>::zeros(config), Params<T>::zeros(config), 0}; }
};

struct LossRecord {
  std::size_t step = 0;
  double mlm_loss = 0.0;
  double itm_loss = 0.0;
};

struct TrainResult {
  Params<float> params;
  AdamState<float> optimizer;
  std::vector<LossRecord> trace;
};

// Called after every step; return false to stop early.
using StepCallback = std::function<bool(const LossRecord&)>;

// Joint MLM + ITM training with Adam. Deterministic for a fixed config seed
// and a fixed SIMD ISA. Throws TrainingDiverged on a non-finite loss.
TrainResult train(Params<float> params, const SyntheticCorpus& corpus, const TrainConfig& config,
                  std::optional<AdamState<float>> optimizer = std::nullopt, const StepCallback& on_step = {});

// One Adam update of `params` in place.
template <typename T>
void adam_update(Params<T>& params, const Params<T>& grads, AdamState<T>& state, const TrainConfig& config);

// Mean cross-entropy of the gold word at each sample's target position with
// that position masked and the full image visible.
double mean_target_loss(const Params<float>& params, const Vocabulary& vocab, const std::vector<ProbeSample>& samples);

// `step,mlm_loss,itm_loss` CSV.
void write_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace);

}  // namespace vlprobe::model
