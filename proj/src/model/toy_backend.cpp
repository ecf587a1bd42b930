#include "vlprobe/model/toy_backend.hpp"

#include <algorithm>
#include <cmath>

#include "vlprobe/error.hpp"
#include "vlprobe/model/checkpoint.hpp"
#include "vlprobe/model/transformer.hpp"

namespace vlprobe::model {

namespace {

std::vector<double> softmax_double(const float* logits, std::size_t n) {
  std::vector<double> out(n);
  double mx = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += (out[i] = std::exp(static_cast<double>(logits[i]) - mx));
  for (auto& v : out) v /= sum;
  return out;
}

Tensor<double> to_double(const Tensor<float>& t) {
  Tensor<double> out(t.rows, t.cols);
  for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = t.data[i];
  return out;
}

}  // namespace

ToyBackend::ToyBackend(Params<float> params, std::shared_ptr<const Vocabulary> vocab, std::string label)
    : params_(std::move(params)), vocab_(std::move(vocab)), label_(std::move(label)) {
  if (!vocab_ || vocab_->size() != params_.config.vocab_size)
    fail(ErrorKind::ShapeError, "toy backend: vocabulary does not match the model");
}

std::shared_ptr<ToyBackend> ToyBackend::from_checkpoint(const std::filesystem::path& path) {
  auto ck = load_checkpoint(path);
  return std::make_shared<ToyBackend>(std::move(ck.params), std::move(ck.vocab), "toy:" + path.filename().string());
}

std::vector<TokenId> ToyBackend::ids_for(const std::vector<std::string>& words) const {
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(w == "[MASK]" ? Vocabulary::kMask : vocab_->id(w));
  return ids;
}

PredictionDistribution ToyBackend::predict_masked(const VisualInput& image, const MaskedCaption& masked) const {
  ForwardOptions opt;
  opt.itm = false;
  opt.mlm_positions = {ModelInput::word_position(masked.mask_index())};
  const auto fwd = forward(params_, encode(ids_for(masked.words()), image), opt);
  return PredictionDistribution(vocab_, softmax_double(fwd.mlm_logits.row(0), vocab_->size()));
}

double ToyBackend::itm_probability(const VisualInput& image, const Caption& caption) const {
  ForwardOptions opt;
  opt.itm = true;
  const auto fwd = forward(params_, encode(ids_for(caption.words), image), opt);
  return softmax_double(fwd.itm_logits.data(), 2)[1];
}

AttentionTrace ToyBackend::attention_trace(const VisualInput& image, const std::vector<std::string>& words,
                                           std::size_t target_word, RelevancyTarget target) const {
  if (target_word >= words.size()) fail(ErrorKind::BadIndex, "attention trace: target word out of range");
  const auto input = encode(ids_for(words), image);
  ForwardOptions opt;
  opt.itm = target == RelevancyTarget::ItmMatch;
  const std::size_t pos = ModelInput::word_position(target_word);
  if (target == RelevancyTarget::MaskedToken) opt.mlm_positions = {pos};
  const auto fwd = forward(params_, input, opt);

  Tensor<float> d_mlm;
  std::vector<float> d_itm;
  if (target == RelevancyTarget::MaskedToken) {
    const auto dist = PredictionDistribution(vocab_, softmax_double(fwd.mlm_logits.row(0), vocab_->size()));
    d_mlm = Tensor<float>(1, vocab_->size());
    d_mlm(0, dist.top_k(1).front()) = 1.0f;
  } else {
    d_itm = {0.0f, 1.0f};
  }
  auto scratch = Params<float>::zeros(params_.config);
  std::vector<Tensor<float>> attn_grads;
  backward(params_, input, fwd, d_mlm, std::span<const float>(d_itm), scratch, &attn_grads);

  AttentionTrace trace;
  trace.n_layers = params_.config.n_layers;
  trace.n_heads = params_.config.n_heads;
  trace.seq_len = fwd.seq_len;
  trace.n_text = fwd.n_text;
  trace.n_rois = input.n_rois;
  trace.target_position = target == RelevancyTarget::ItmMatch ? 0 : pos;
  for (const auto& layer : fwd.layers)
    for (const auto& a : layer.attn) trace.attention.push_back(to_double(a));
  for (const auto& g : attn_grads) trace.gradients.push_back(to_double(g));
  return trace;
}

}  // namespace vlprobe::model
