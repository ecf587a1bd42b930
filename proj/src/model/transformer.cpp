#include "vlprobe/model/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "vlprobe/error.hpp"

namespace vlprobe::model {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

template <typename T>
void layer_norm_forward(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, Tensor<T>& y,
                        LayerNormCache<T>& cache) {
  const std::size_t n = x.rows, d = x.cols;
  y = Tensor<T>(n, d);
  cache.xhat = Tensor<T>(n, d);
  cache.rstd.assign(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T* xr = x.row(i);
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(d);
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    cache.rstd[i] = rstd;
    T* xh = cache.xhat.row(i);
    T* yr = y.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (xr[j] - mean) * rstd;
      yr[j] = xh[j] * gain.data[j] + bias.data[j];
    }
  }
}

// dx += LayerNorm backward of dy.
template <typename T>
void layer_norm_backward(const Tensor<T>& dy, const LayerNormCache<T>& cache, const Tensor<T>& gain,
                         Tensor<T>& dgain, Tensor<T>& dbias, Tensor<T>& dx) {
  const std::size_t n = dy.rows, d = dy.cols;
  std::vector<T> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    const T* dyr = dy.row(i);
    const T* xh = cache.xhat.row(i);
    T mean_dxhat = 0, mean_dxhat_xhat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dgain.data[j] += dyr[j] * xh[j];
      dbias.data[j] += dyr[j];
      dxhat[j] = dyr[j] * gain.data[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xh[j];
    }
    mean_dxhat /= static_cast<T>(d);
    mean_dxhat_xhat /= static_cast<T>(d);
    T* dxr = dx.row(i);
    for (std::size_t j = 0; j < d; ++j) dxr[j] += cache.rstd[i] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
  }
}

template <typename T>
T gelu(T u) {
  const T a = static_cast<T>(kGeluC) * (u + static_cast<T>(kGeluA) * u * u * u);
  return T(0.5) * u * (T(1) + std::tanh(a));
}

template <typename T>
T gelu_grad(T u) {
  const T a = static_cast<T>(kGeluC) * (u + static_cast<T>(kGeluA) * u * u * u);
  const T t = std::tanh(a);
  const T da = static_cast<T>(kGeluC) * (T(1) + T(3) * static_cast<T>(kGeluA) * u * u);
  return T(0.5) * (T(1) + t) + T(0.5) * u * (T(1) - t * t) * da;
}

template <typename T>
void add_bias_rows(Tensor<T>& x, const Tensor<T>& bias) {
  for (std::size_t i = 0; i < x.rows; ++i) {
    T* r = x.row(i);
    for (std::size_t j = 0; j < x.cols; ++j) r[j] += bias.data[j];
  }
}

template <typename T>
void sum_rows_into(const Tensor<T>& x, Tensor<T>& out) {
  for (std::size_t i = 0; i < x.rows; ++i) {
    const T* r = x.row(i);
    for (std::size_t j = 0; j < x.cols; ++j) out.data[j] += r[j];
  }
}

template <typename T>
void check_input(const Params<T>& p, const ModelInput& in) {
  const auto& c = p.config;
  if (in.text.size() < 2 || in.text.front() != Vocabulary::kCls || in.text.back() != Vocabulary::kSep)
    fail(ErrorKind::ShapeError, "model input: text must be framed by [CLS] ... [SEP]");
  if (in.seq_len() > c.max_len)
    fail(ErrorKind::ShapeError, "model input: sequence length " + std::to_string(in.seq_len()) + " exceeds " +
                                    std::to_string(c.max_len));
  if (in.roi_features.size() != in.n_rois * c.d_v)
    fail(ErrorKind::ShapeError, "model input: ROI feature dim does not match d_v=" + std::to_string(c.d_v));
  if (in.roi_boxes.size() != in.n_rois * 4) fail(ErrorKind::ShapeError, "model input: ROI box count mismatch");
  for (TokenId t : in.text)
    if (t >= c.vocab_size) fail(ErrorKind::ShapeError, "model input: token id outside vocabulary");
}

}  // namespace

ModelInput encode(std::span<const TokenId> caption_tokens, const VisualInput& image) {
  ModelInput in;
  in.text.reserve(caption_tokens.size() + 2);
  in.text.push_back(Vocabulary::kCls);
  in.text.insert(in.text.end(), caption_tokens.begin(), caption_tokens.end());
  in.text.push_back(Vocabulary::kSep);
  in.n_rois = image.rois.size();
  const std::size_t dv = image.feature_dim();
  in.roi_features.reserve(in.n_rois * dv);
  in.roi_boxes.reserve(in.n_rois * 4);
  for (const auto& r : image.rois) {
    if (r.feature.size() != dv) fail(ErrorKind::ShapeError, "encode: mixed ROI feature dims");
    in.roi_features.insert(in.roi_features.end(), r.feature.begin(), r.feature.end());
    for (double v : {r.bbox.x1, r.bbox.y1, r.bbox.x2, r.bbox.y2}) in.roi_boxes.push_back(static_cast<float>(v));
  }
  return in;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> out(logits.size());
  if (logits.empty()) return out;
  const T mx = *std::max_element(logits.begin(), logits.end());
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += (out[i] = std::exp(logits[i] - mx));
  for (auto& v : out) v /= sum;
  return out;
}

template <typename T>
T cross_entropy(std::span<const T> logits, std::size_t target, std::span<T> grad, T scale) {
  auto probs = softmax(logits);
  for (std::size_t i = 0; i < probs.size(); ++i) grad[i] = scale * probs[i];
  grad[target] -= scale;
  const T mx = *std::max_element(logits.begin(), logits.end());
  T sum = 0;
  for (T l : logits) sum += std::exp(l - mx);
  return std::log(sum) + mx - logits[target];
}

template <typename T>
ForwardResult<T> forward(const Params<T>& p, const ModelInput& in, const ForwardOptions& opt) {
  check_input(p, in);
  const auto& c = p.config;
  const std::size_t d = c.d_model, H = c.n_heads, dh = c.d_head(), S = in.seq_len(), nt = in.text.size();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  ForwardResult<T> r;
  r.seq_len = S;
  r.n_text = nt;

  Tensor<T> x(S, d);
  for (std::size_t i = 0; i < nt; ++i) {
    T* xr = x.row(i);
    const T* e = p.text_embed.row(in.text[i]);
    const T* pe = p.pos_embed.row(i);
    for (std::size_t j = 0; j < d; ++j) xr[j] = e[j] + pe[j];
  }
  for (std::size_t k = 0; k < in.n_rois; ++k) {
    T* xr = x.row(nt + k);
    for (std::size_t j = 0; j < d; ++j) xr[j] = p.roi_type.data[j];
    for (std::size_t f = 0; f < c.d_v; ++f) {
      const T fv = static_cast<T>(in.roi_features[k * c.d_v + f]);
      if (fv != T(0)) simd::axpy(fv, p.roi_proj.row(f), xr, d);
    }
    for (std::size_t b = 0; b < 4; ++b) simd::axpy(static_cast<T>(in.roi_boxes[k * 4 + b]), p.bbox_embed.row(b), xr, d);
  }

  r.layers.resize(c.n_layers);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const auto& L = p.layers[l];
    auto& lc = r.layers[l];
    lc.x_in = x;
    layer_norm_forward(x, L.ln1_gain, L.ln1_bias, lc.h1, lc.ln1);
    lc.q = Tensor<T>(S, d);
    lc.k = Tensor<T>(S, d);
    lc.v = Tensor<T>(S, d);
    matmul_acc(lc.h1.data.data(), L.wq.data.data(), lc.q.data.data(), S, d, d);
    matmul_acc(lc.h1.data.data(), L.wk.data.data(), lc.k.data.data(), S, d, d);
    matmul_acc(lc.h1.data.data(), L.wv.data.data(), lc.v.data.data(), S, d, d);
    lc.attn.assign(H, Tensor<T>(S, S));
    lc.ctx = Tensor<T>(S, d);
    for (std::size_t h = 0; h < H; ++h) {
      auto& A = lc.attn[h];
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < S; ++i) {
        T* ar = A.row(i);
        for (std::size_t j = 0; j < S; ++j) ar[j] = scale * simd::dot(lc.q.row(i) + off, lc.k.row(j) + off, dh);
        auto probs = softmax(std::span<const T>(ar, S));
        std::copy(probs.begin(), probs.end(), ar);
        T* cr = lc.ctx.row(i) + off;
        for (std::size_t j = 0; j < S; ++j) simd::axpy(ar[j], lc.v.row(j) + off, cr, dh);
      }
    }
    x = lc.x_in;
    matmul_acc(lc.ctx.data.data(), L.wo.data.data(), x.data.data(), S, d, d);
    lc.x_mid = x;
    layer_norm_forward(x, L.ln2_gain, L.ln2_bias, lc.h2, lc.ln2);
    lc.u = Tensor<T>(S, c.d_ffn());
    matmul_acc(lc.h2.data.data(), L.ffn_w1.data.data(), lc.u.data.data(), S, d, c.d_ffn());
    add_bias_rows(lc.u, L.ffn_b1);
    lc.g = lc.u;
    for (auto& v : lc.g.data) v = gelu(v);
    matmul_acc(lc.g.data.data(), L.ffn_w2.data.data(), x.data.data(), S, c.d_ffn(), d);
    add_bias_rows(x, L.ffn_b2);
  }
  r.x_out = x;
  layer_norm_forward(x, p.lnf_gain, p.lnf_bias, r.z, r.lnf);

  r.mlm_positions = opt.mlm_positions;
  r.mlm_logits = Tensor<T>(opt.mlm_positions.size(), c.vocab_size);
  for (std::size_t m = 0; m < opt.mlm_positions.size(); ++m) {
    const std::size_t pos = opt.mlm_positions[m];
    if (pos >= S) fail(ErrorKind::ShapeError, "forward: MLM position outside sequence");
    T* out = r.mlm_logits.row(m);
    const T* zr = r.z.row(pos);
    for (std::size_t v = 0; v < c.vocab_size; ++v) out[v] = simd::dot(zr, p.text_embed.row(v), d) + p.mlm_bias.data[v];
  }
  if (opt.itm) {
    r.itm_logits.assign(2, T(0));
    const T* z0 = r.z.row(0);
    for (std::size_t cls = 0; cls < 2; ++cls) {
      T acc = p.itm_bias.data[cls];
      for (std::size_t j = 0; j < d; ++j) acc += z0[j] * p.itm_head(j, cls);
      r.itm_logits[cls] = acc;
    }
  }
  return r;
}

template <typename T>
void backward(const Params<T>& p, const ModelInput& in, const ForwardResult<T>& r, const Tensor<T>& d_mlm,
              std::span<const T> d_itm, Params<T>& g, std::vector<Tensor<T>>* attention_grads) {
  const auto& c = p.config;
  const std::size_t d = c.d_model, H = c.n_heads, dh = c.d_head(), S = r.seq_len, nt = r.n_text;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Tensor<T> dz(S, d);
  if (d_mlm.rows > 0) {
    if (d_mlm.rows != r.mlm_positions.size() || d_mlm.cols != c.vocab_size)
      fail(ErrorKind::ShapeError, "backward: MLM gradient shape mismatch");
    for (std::size_t m = 0; m < r.mlm_positions.size(); ++m) {
      const std::size_t pos = r.mlm_positions[m];
      const T* dl = d_mlm.row(m);
      const T* zr = r.z.row(pos);
      T* dzr = dz.row(pos);
      for (std::size_t v = 0; v < c.vocab_size; ++v) {
        if (dl[v] == T(0)) continue;
        simd::axpy(dl[v], p.text_embed.row(v), dzr, d);
        simd::axpy(dl[v], zr, g.text_embed.row(v), d);
        g.mlm_bias.data[v] += dl[v];
      }
    }
  }
  if (!d_itm.empty()) {
    if (d_itm.size() != 2 || r.itm_logits.size() != 2) fail(ErrorKind::ShapeError, "backward: ITM gradient shape mismatch");
    const T* z0 = r.z.row(0);
    T* dz0 = dz.row(0);
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t cls = 0; cls < 2; ++cls) {
        dz0[j] += p.itm_head(j, cls) * d_itm[cls];
        g.itm_head(j, cls) += z0[j] * d_itm[cls];
      }
    }
    g.itm_bias.data[0] += d_itm[0];
    g.itm_bias.data[1] += d_itm[1];
  }

  Tensor<T> dx(S, d);
  layer_norm_backward(dz, r.lnf, p.lnf_gain, g.lnf_gain, g.lnf_bias, dx);

  if (attention_grads) attention_grads->assign(c.n_layers * H, Tensor<T>(S, S));

  for (std::size_t l = c.n_layers; l-- > 0;) {
    const auto& L = p.layers[l];
    auto& G = g.layers[l];
    const auto& lc = r.layers[l];

    // Feed-forward block: x_out = x_mid + GELU(h2 W1 + b1) W2 + b2.
    sum_rows_into(dx, G.ffn_b2);
    matmul_tn_acc(lc.g.data.data(), dx.data.data(), G.ffn_w2.data.data(), c.d_ffn(), S, d);
    Tensor<T> du(S, c.d_ffn());
    matmul_nt_acc(dx.data.data(), L.ffn_w2.data.data(), du.data.data(), S, d, c.d_ffn());
    for (std::size_t i = 0; i < du.size(); ++i) du.data[i] *= gelu_grad(lc.u.data[i]);
    sum_rows_into(du, G.ffn_b1);
    matmul_tn_acc(lc.h2.data.data(), du.data.data(), G.ffn_w1.data.data(), d, S, c.d_ffn());
    Tensor<T> dh2(S, d);
    matmul_nt_acc(du.data.data(), L.ffn_w1.data.data(), dh2.data.data(), S, c.d_ffn(), d);
    layer_norm_backward(dh2, lc.ln2, L.ln2_gain, G.ln2_gain, G.ln2_bias, dx);  // dx is now d x_mid

    // Attention block: x_mid = x_in + ctx Wo.
    matmul_tn_acc(lc.ctx.data.data(), dx.data.data(), G.wo.data.data(), d, S, d);
    Tensor<T> dctx(S, d);
    matmul_nt_acc(dx.data.data(), L.wo.data.data(), dctx.data.data(), S, d, d);
    Tensor<T> dq(S, d), dk(S, d), dv(S, d);
    std::vector<T> dA(S), dscore(S);
    for (std::size_t h = 0; h < H; ++h) {
      const auto& A = lc.attn[h];
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < S; ++i) {
        const T* ar = A.row(i);
        const T* dcr = dctx.row(i) + off;
        T rowdot = 0;
        for (std::size_t j = 0; j < S; ++j) {
          dA[j] = simd::dot(dcr, lc.v.row(j) + off, dh);
          rowdot += dA[j] * ar[j];
          simd::axpy(ar[j], dcr, dv.row(j) + off, dh);
        }
        if (attention_grads) std::copy(dA.begin(), dA.end(), (*attention_grads)[l * H + h].row(i));
        for (std::size_t j = 0; j < S; ++j) dscore[j] = ar[j] * (dA[j] - rowdot) * scale;
        for (std::size_t j = 0; j < S; ++j) {
          if (dscore[j] == T(0)) continue;
          simd::axpy(dscore[j], lc.k.row(j) + off, dq.row(i) + off, dh);
          simd::axpy(dscore[j], lc.q.row(i) + off, dk.row(j) + off, dh);
        }
      }
    }
    matmul_tn_acc(lc.h1.data.data(), dq.data.data(), G.wq.data.data(), d, S, d);
    matmul_tn_acc(lc.h1.data.data(), dk.data.data(), G.wk.data.data(), d, S, d);
    matmul_tn_acc(lc.h1.data.data(), dv.data.data(), G.wv.data.data(), d, S, d);
    Tensor<T> dh1(S, d);
    matmul_nt_acc(dq.data.data(), L.wq.data.data(), dh1.data.data(), S, d, d);
    matmul_nt_acc(dk.data.data(), L.wk.data.data(), dh1.data.data(), S, d, d);
    matmul_nt_acc(dv.data.data(), L.wv.data.data(), dh1.data.data(), S, d, d);
    layer_norm_backward(dh1, lc.ln1, L.ln1_gain, G.ln1_gain, G.ln1_bias, dx);  // dx is now d x_in
  }

  for (std::size_t i = 0; i < nt; ++i) {
    simd::axpy(T(1), dx.row(i), g.text_embed.row(in.text[i]), d);
    simd::axpy(T(1), dx.row(i), g.pos_embed.row(i), d);
  }
  for (std::size_t k = 0; k < in.n_rois; ++k) {
    const T* dxr = dx.row(nt + k);
    simd::axpy(T(1), dxr, g.roi_type.data.data(), d);
    for (std::size_t f = 0; f < c.d_v; ++f) {
      const T fv = static_cast<T>(in.roi_features[k * c.d_v + f]);
      if (fv != T(0)) simd::axpy(fv, dxr, g.roi_proj.row(f), d);
    }
    for (std::size_t b = 0; b < 4; ++b) simd::axpy(static_cast<T>(in.roi_boxes[k * 4 + b]), dxr, g.bbox_embed.row(b), d);
  }
}

template std::vector<float> softmax(std::span<const float>);
template std::vector<double> softmax(std::span<const double>);
template float cross_entropy(std::span<const float>, std::size_t, std::span<float>, float);
template double cross_entropy(std::span<const double>, std::size_t, std::span<double>, double);
template ForwardResult<float> forward(const Params<float>&, const ModelInput&, const ForwardOptions&);
template ForwardResult<double> forward(const Params<double>&, const ModelInput&, const ForwardOptions&);
template void backward(const Params<float>&, const ModelInput&, const ForwardResult<float>&, const Tensor<float>&,
                       std::span<const float>, Params<float>&, std::vector<Tensor<float>>*);
template void backward(const Params<double>&, const ModelInput&, const ForwardResult<double>&,
                       const Tensor<double>&, std::span<const double>, Params<double>&,
                       std::vector<Tensor<double>>*);

}  // namespace vlprobe::model
