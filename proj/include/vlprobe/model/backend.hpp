#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "vlprobe/core/caption.hpp"
#include "vlprobe/core/visual.hpp"
#include "vlprobe/model/tensor.hpp"

namespace vlprobe::model {

// P over a backend's vocabulary at the masked position.
class PredictionDistribution {
 public:
  // Throws BackendError when probs are negative, non-finite, do not match the
  // vocabulary size, or do not sum to 1 within 1e-6.
  PredictionDistribution(std::shared_ptr<const Vocabulary> vocab, std::vector<double> probs);

  const Vocabulary& vocab() const { return *vocab_; }
  const std::vector<double>& probs() const { return probs_; }

  // The k most probable tokens, ties broken by lower id; [PAD], [CLS], [SEP]
  // and [MASK] never appear.
  std::vector<TokenId> top_k(std::size_t k) const;

  static constexpr double kSumTolerance = 1e-6;

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::vector<double> probs_;
};

struct Capabilities {
  bool mlm = false;
  bool itm = false;
  bool attention_introspection = false;
};

enum class RelevancyTarget { ItmMatch, MaskedToken };

// Attention maps and dLogit/dAttention for one readout, per layer and head.
struct AttentionTrace {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t seq_len = 0;
  std::size_t n_text = 0;  // text positions including [CLS] and [SEP]
  std::size_t n_rois = 0;
  std::size_t target_position = 0;
  std::vector<Tensor<double>> attention;  // layer-major, seq_len x seq_len
  std::vector<Tensor<double>> gradients;  // same layout
};

// Contract every prober consumes. Implementations must be pure: identical
// inputs give identical outputs, and concurrent calls are safe.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual std::string name() const = 0;
  virtual Capabilities capabilities() const = 0;

  virtual PredictionDistribution predict_masked(const VisualInput& image, const MaskedCaption& masked) const = 0;
  // Language-only query. The default feeds one blank ROI (zero features,
  // full-frame box), which is how a vision-language model sees "no image".
  virtual PredictionDistribution predict_text_only(const MaskedCaption& masked) const;
  virtual double itm_probability(const VisualInput& image, const Caption& caption) const = 0;
  // Default throws CapabilityError.
  virtual AttentionTrace attention_trace(const VisualInput& image, const std::vector<std::string>& words,
                                         std::size_t target_word, RelevancyTarget target) const;
  // Feature dimension of ROI inputs; 0 when the backend accepts any.
  virtual std::size_t feature_dim() const { return 0; }
};

// Blank image used for text-only queries.
VisualInput blank_image(std::size_t feature_dim);

// Checked entry points: verify the capability, and turn any non-library
// exception from the backend into BackendError.
PredictionDistribution predict_masked(const ModelBackend& backend, const VisualInput& image, const MaskedCaption& masked);
double itm_probability(const ModelBackend& backend, const VisualInput& image, const Caption& caption);

}  // namespace vlprobe::model
