#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlprobe/model/tensor.hpp"

namespace vlprobe::model {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_v = 32;
  std::size_t max_len = 32;

  std::size_t d_ffn() const { return 4 * d_model; }
  std::size_t d_head() const { return d_model / n_heads; }
  // Throws ShapeError on inconsistent dimensions.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct LayerParams {
  Tensor<T> ln1_gain, ln1_bias;      // 1 x d
  Tensor<T> wq, wk, wv, wo;          // d x d
  Tensor<T> ln2_gain, ln2_bias;      // 1 x d
  Tensor<T> ffn_w1, ffn_b1;          // d x 4d, 1 x 4d
  Tensor<T> ffn_w2, ffn_b2;          // 4d x d, 1 x d
};

// All weights of the single-stream toy transformer. The MLM output
// projection is tied to `text_embed`; only its bias is separate.
template <typename T>
struct Params {
  ModelConfig config;
  Tensor<T> text_embed;  // |V| x d
  Tensor<T> pos_embed;   // L x d, text positions only
  Tensor<T> roi_proj;    // d_v x d
  Tensor<T> bbox_embed;  // 4 x d
  Tensor<T> roi_type;    // 1 x d, modality embedding added to every ROI token
  std::vector<LayerParams<T>> layers;
  Tensor<T> lnf_gain, lnf_bias;  // 1 x d
  Tensor<T> mlm_bias;            // 1 x |V|
  Tensor<T> itm_head;            // d x 2
  Tensor<T> itm_bias;            // 1 x 2

  // Zero tensors of the right shapes (LayerNorm gains included).
  static Params zeros(const ModelConfig& config);
  // Small Gaussian weights, unit LayerNorm gains, zero biases.
  static Params init(const ModelConfig& config, std::uint64_t seed);

  // Visits every tensor in a fixed order with a stable name.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t num_parameters() const;
  bool all_finite() const;
  bool operator==(const Params& o) const;

  template <typename U>
  Params<U> cast() const;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f("text_embed", self.text_embed);
    f("pos_embed", self.pos_embed);
    f("roi_proj", self.roi_proj);
    f("bbox_embed", self.bbox_embed);
    f("roi_type", self.roi_type);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& L = self.layers[l];
      const std::string p = "layers." + std::to_string(l) + ".";
      f(p + "ln1_gain", L.ln1_gain);
      f(p + "ln1_bias", L.ln1_bias);
      f(p + "wq", L.wq);
      f(p + "wk", L.wk);
      f(p + "wv", L.wv);
      f(p + "wo", L.wo);
      f(p + "ln2_gain", L.ln2_gain);
      f(p + "ln2_bias", L.ln2_bias);
      f(p + "ffn_w1", L.ffn_w1);
      f(p + "ffn_b1", L.ffn_b1);
      f(p + "ffn_w2", L.ffn_w2);
      f(p + "ffn_b2", L.ffn_b2);
    }
    f("lnf_gain", self.lnf_gain);
    f("lnf_bias", self.lnf_bias);
    f("mlm_bias", self.mlm_bias);
    f("itm_head", self.itm_head);
    f("itm_bias", self.itm_bias);
  }
};

template <typename T>
template <typename U>
Params<U> Params<T>::cast() const {
  auto out = Params<U>::zeros(config);
  std::vector<const Tensor<T>*> src;
  for_each([&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
  std::size_t i = 0;
  out.for_each([&](const std::string&, Tensor<U>& t) {
    const auto& s = *src[i++];
    for (std::size_t k = 0; k < t.size(); ++k) t.data[k] = static_cast<U>(s.data[k]);
  });
  return out;
}

extern template struct Params<float>;
extern template struct Params<double>;

}  // namespace vlprobe::model
