#include "vlprobe/model/params.hpp"

#include <cmath>
#include <random>

#include "vlprobe/error.hpp"

namespace vlprobe::model {

void ModelConfig::validate() const {
  if (vocab_size <= 5) fail(ErrorKind::ShapeError, "model config: vocabulary too small");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    fail(ErrorKind::ShapeError, "model config: d_model must be a positive multiple of n_heads");
  if (d_v == 0) fail(ErrorKind::ShapeError, "model config: d_v must be positive");
  if (max_len < 3) fail(ErrorKind::ShapeError, "model config: max_len too small");
}

template <typename T>
Params<T> Params<T>::zeros(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  Params p;
  p.config = c;
  p.text_embed = Tensor<T>(c.vocab_size, d);
  p.pos_embed = Tensor<T>(c.max_len, d);
  p.roi_proj = Tensor<T>(c.d_v, d);
  p.bbox_embed = Tensor<T>(4, d);
  p.roi_type = Tensor<T>(1, d);
  p.layers.resize(c.n_layers);
  for (auto& L : p.layers) {
    L.ln1_gain = Tensor<T>(1, d);
    L.ln1_bias = Tensor<T>(1, d);
    L.wq = Tensor<T>(d, d);
    L.wk = Tensor<T>(d, d);
    L.wv = Tensor<T>(d, d);
    L.wo = Tensor<T>(d, d);
    L.ln2_gain = Tensor<T>(1, d);
    L.ln2_bias = Tensor<T>(1, d);
    L.ffn_w1 = Tensor<T>(d, c.d_ffn());
    L.ffn_b1 = Tensor<T>(1, c.d_ffn());
    L.ffn_w2 = Tensor<T>(c.d_ffn(), d);
    L.ffn_b2 = Tensor<T>(1, d);
  }
  p.lnf_gain = Tensor<T>(1, d);
  p.lnf_bias = Tensor<T>(1, d);
  p.mlm_bias = Tensor<T>(1, c.vocab_size);
  p.itm_head = Tensor<T>(d, 2);
  p.itm_bias = Tensor<T>(1, 2);
  return p;
}

template <typename T>
Params<T> Params<T>::init(const ModelConfig& c, std::uint64_t seed) {
  auto p = zeros(c);
  std::mt19937_64 rng(seed);
  const double d = static_cast<double>(c.d_model);
  auto fill = [&](Tensor<T>& t, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
  };
  auto ones = [](Tensor<T>& t) { std::fill(t.data.begin(), t.data.end(), T(1)); };
  fill(p.text_embed, 0.1);
  fill(p.pos_embed, 0.1);
  fill(p.roi_proj, 1.0 / std::sqrt(static_cast<double>(c.d_v)));
  fill(p.bbox_embed, 0.1);
  fill(p.roi_type, 0.1);
  const double out_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(c.n_layers));
  for (auto& L : p.layers) {
    ones(L.ln1_gain);
    ones(L.ln2_gain);
    fill(L.wq, 1.0 / std::sqrt(d));
    fill(L.wk, 1.0 / std::sqrt(d));
    fill(L.wv, 1.0 / std::sqrt(d));
    fill(L.wo, out_scale / std::sqrt(d));
    fill(L.ffn_w1, 1.0 / std::sqrt(d));
    fill(L.ffn_w2, out_scale / std::sqrt(static_cast<double>(c.d_ffn())));
  }
  ones(p.lnf_gain);
  fill(p.itm_head, 1.0 / std::sqrt(d));
  return p;
}

template <typename T>
std::size_t Params<T>::num_parameters() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
  return n;
}

template <typename T>
bool Params<T>::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Tensor<T>& t) {
    for (T v : t.data)
      if (!std::isfinite(v)) ok = false;
  });
  return ok;
}

template <typename T>
bool Params<T>::operator==(const Params& o) const {
  if (!(config == o.config) || layers.size() != o.layers.size()) return false;
  std::vector<const Tensor<T>*> mine;
  for_each([&](const std::string&, const Tensor<T>& t) { mine.push_back(&t); });
  std::size_t i = 0;
  bool eq = true;
  o.for_each([&](const std::string&, const Tensor<T>& t) { eq = eq && (*mine[i++] == t); });
  return eq;
}

template struct Params<float>;
template struct Params<double>;

}  // namespace vlprobe::model
