#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vlprobe/core/caption.hpp"
#include "vlprobe/core/visual.hpp"
#include "vlprobe/model/params.hpp"

namespace vlprobe::model {

// One encoded (image, caption) pair. The sequence is
//   [CLS] w_1 .. w_n [SEP] roi_1 .. roi_m
// Text tokens get word + position embeddings; ROI tokens get
// roi_proj * feature + bbox_embed * bbox + roi_type.
struct ModelInput {
  std::vector<TokenId> text;      // framed by [CLS] / [SEP]
  std::vector<float> roi_features;  // n_rois x d_v
  std::vector<float> roi_boxes;     // n_rois x 4
  std::size_t n_rois = 0;

  std::size_t seq_len() const { return text.size() + n_rois; }
  // Sequence position of caption word i (after [CLS]).
  static std::size_t word_position(std::size_t i) { return i + 1; }
};

ModelInput encode(std::span<const TokenId> caption_tokens, const VisualInput& image);

struct ForwardOptions {
  std::vector<std::size_t> mlm_positions;  // sequence positions to read out
  bool itm = true;
};

template <typename T>
struct LayerNormCache {
  Tensor<T> xhat;
  std::vector<T> rstd;
};

template <typename T>
struct LayerCache {
  Tensor<T> x_in;
  LayerNormCache<T> ln1;
  Tensor<T> h1;
  Tensor<T> q, k, v;
  std::vector<Tensor<T>> attn;  // per head, S x S, rows sum to 1
  Tensor<T> ctx;
  Tensor<T> x_mid;
  LayerNormCache<T> ln2;
  Tensor<T> h2;
  Tensor<T> u;  // pre-activation, S x 4d
  Tensor<T> g;  // GELU(u)
};

template <typename T>
struct ForwardResult {
  std::size_t seq_len = 0;
  std::size_t n_text = 0;
  std::vector<LayerCache<T>> layers;
  Tensor<T> x_out;
  LayerNormCache<T> lnf;
  Tensor<T> z;  // final hidden states
  std::vector<std::size_t> mlm_positions;
  Tensor<T> mlm_logits;  // |mlm_positions| x |V|
  std::vector<T> itm_logits;  // {no-match, match}; empty when not requested
};

// Throws ShapeError when the input does not fit the model.
template <typename T>
ForwardResult<T> forward(const Params<T>& params, const ModelInput& input, const ForwardOptions& options);

// Analytic gradients. `d_mlm_logits` matches result.mlm_logits in shape (it may
// be empty when no MLM loss applies) and `d_itm_logits` has 0 or 2 entries.
// Gradients are accumulated into `grads`. When `attention_grads` is given it
// receives dLoss/dAttention per layer and head (layer-major, S x S each).
template <typename T>
void backward(const Params<T>& params, const ModelInput& input, const ForwardResult<T>& result,
              const Tensor<T>& d_mlm_logits, std::span<const T> d_itm_logits, Params<T>& grads,
              std::vector<Tensor<T>>* attention_grads = nullptr);

// Numerically stable softmax of one row.
template <typename T>
std::vector<T> softmax(std::span<const T> logits);

// Cross-entropy of `logits` against `target`; writes dLoss/dlogits * scale
// into `grad` (overwritten) and returns the loss.
template <typename T>
T cross_entropy(std::span<const T> logits, std::size_t target, std::span<T> grad, T scale = T(1));

}  // namespace vlprobe::model
