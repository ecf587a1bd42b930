#include "vlprobe/model/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>

#include "vlprobe/error.hpp"
#include "vlprobe/model/transformer.hpp"

namespace vlprobe::model {

namespace {

enum class VisualMode { Full, WholeImageZeroed, SubjectZeroed, BlankRoi };

VisualInput degrade(const VisualInput& image, const std::string& subject, VisualMode mode) {
  VisualInput out = image;
  switch (mode) {
    case VisualMode::Full:
      break;
    case VisualMode::WholeImageZeroed:
      for (auto& r : out.rois) std::fill(r.feature.begin(), r.feature.end(), 0.0f);
      break;
    case VisualMode::SubjectZeroed: {
      std::vector<BBox> subject_boxes;
      for (const auto& r : out.rois)
        if (r.label == subject) subject_boxes.push_back(r.bbox);
      for (auto& r : out.rois)
        for (const auto& b : subject_boxes)
          if (intersects(r.bbox, b)) std::fill(r.feature.begin(), r.feature.end(), 0.0f);
      break;
    }
    case VisualMode::BlankRoi: {
      RoiFeature blank;
      blank.bbox = {0.0, 0.0, 1.0, 1.0};
      blank.feature.assign(image.feature_dim(), 0.0f);
      blank.label = "none";
      blank.score = 0.0;
      out.rois.assign(1, std::move(blank));
      break;
    }
  }
  return out;
}

void fmt_double(std::ostream& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, ptr - buf);
}

}  // namespace

template <typename T>
void adam_update(Params<T>& params, const Params<T>& grads, AdamState<T>& state, const TrainConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::vector<Tensor<T>*> p, m, v;
  std::vector<const Tensor<T>*> g;
  params.for_each([&](const std::string&, Tensor<T>& t) { p.push_back(&t); });
  state.m.for_each([&](const std::string&, Tensor<T>& t) { m.push_back(&t); });
  state.v.for_each([&](const std::string&, Tensor<T>& t) { v.push_back(&t); });
  grads.for_each([&](const std::string&, const Tensor<T>& t) { g.push_back(&t); });
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step = static_cast<T>(cfg.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t t = 0; t < p.size(); ++t) {
    auto& pd = p[t]->data;
    auto& md = m[t]->data;
    auto& vd = v[t]->data;
    const auto& gd = g[t]->data;
    for (std::size_t i = 0; i < pd.size(); ++i) {
      md[i] = b1 * md[i] + (T(1) - b1) * gd[i];
      vd[i] = b2 * vd[i] + (T(1) - b2) * gd[i] * gd[i];
      pd[i] -= step * md[i] / (std::sqrt(vd[i] * inv_bc2) + eps);
    }
  }
}

template void adam_update(Params<float>&, const Params<float>&, AdamState<float>&, const TrainConfig&);
template void adam_update(Params<double>&, const Params<double>&, AdamState<double>&, const TrainConfig&);

TrainResult train(Params<float> params, const SyntheticCorpus& corpus, const TrainConfig& cfg,
                  std::optional<AdamState<float>> optimizer, const StepCallback& on_step) {
  if (corpus.samples.empty()) fail(ErrorKind::UsageError, "train: empty corpus");
  if (cfg.batch == 0) fail(ErrorKind::UsageError, "train: batch must be positive");
  const auto& vocab = *corpus.world.vocab;
  if (params.config.vocab_size != vocab.size()) fail(ErrorKind::ShapeError, "train: model vocabulary size mismatch");

  TrainResult result;
  result.optimizer = optimizer ? std::move(*optimizer) : AdamState<float>::zeros(params.config);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick_sample(0, corpus.samples.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto grads = Params<float>::zeros(params.config);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    grads.for_each([](const std::string&, Tensor<float>& t) { t.zero(); });
    double mlm_sum = 0.0, itm_sum = 0.0;
    std::size_t mlm_n = 0, itm_n = 0;
    const float inv_batch = 1.0f / static_cast<float>(cfg.batch);

    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const ProbeSample& base = corpus.samples[pick_sample(rng)];
      VisualMode mode = VisualMode::Full;
      if (unit(rng) < cfg.feature_drop_prob) mode = static_cast<VisualMode>(1 + rng() % 3);
      // Full-view pairs serve either MLM or ITM; ITM pairs stay unmasked so the
      // match head cannot key on the presence of [MASK].
      const bool itm_pair = mode == VisualMode::Full && unit(rng) < cfg.itm_pair_prob;
      const bool negative = itm_pair && unit(rng) < cfg.itm_neg_prob;
      const ProbeSample sample = negative ? make_verb_foil(corpus.world, base, rng) : base;

      std::vector<TokenId> tokens = sample.caption.tokens;
      ForwardOptions opt;
      opt.itm = itm_pair;
      std::vector<TokenId> targets;
      if (!itm_pair) {
        for (std::size_t i = 0; i < tokens.size(); ++i)
          if (unit(rng) < cfg.mlm_mask_prob) opt.mlm_positions.push_back(ModelInput::word_position(i));
        if (opt.mlm_positions.empty())
          opt.mlm_positions.push_back(ModelInput::word_position(rng() % tokens.size()));
        for (auto pos : opt.mlm_positions) {
          targets.push_back(tokens[pos - 1]);
          tokens[pos - 1] = Vocabulary::kMask;
        }
      }
      const auto image = degrade(sample.image, sample.subject_word, mode);
      const auto input = encode(tokens, image);
      const auto fwd = forward(params, input, opt);

      Tensor<float> d_mlm(opt.mlm_positions.size(), vocab.size());
      if (!targets.empty()) {
        const float scale = inv_batch / static_cast<float>(targets.size());
        double loss = 0.0;
        for (std::size_t m = 0; m < targets.size(); ++m)
          loss += cross_entropy<float>(std::span<const float>(fwd.mlm_logits.row(m), vocab.size()), targets[m],
                                       std::span<float>(d_mlm.row(m), vocab.size()), scale);
        mlm_sum += loss / static_cast<double>(targets.size());
        ++mlm_n;
      }
      std::vector<float> d_itm;
      if (opt.itm) {
        d_itm.assign(2, 0.0f);
        itm_sum += cross_entropy<float>(fwd.itm_logits, negative ? 0 : 1, d_itm, inv_batch);
        ++itm_n;
      }
      backward(params, input, fwd, d_mlm, std::span<const float>(d_itm), grads);
    }

    LossRecord rec;
    rec.step = step + 1;
    rec.mlm_loss = mlm_n ? mlm_sum / static_cast<double>(mlm_n) : 0.0;
    rec.itm_loss = itm_n ? itm_sum / static_cast<double>(itm_n) : 0.0;
    if (!std::isfinite(rec.mlm_loss) || !std::isfinite(rec.itm_loss))
      fail(ErrorKind::TrainingDiverged, "training diverged at step " + std::to_string(rec.step));
    adam_update(params, grads, result.optimizer, cfg);
    result.trace.push_back(rec);
    if (on_step && !on_step(rec)) break;
  }
  result.params = std::move(params);
  return result;
}

double mean_target_loss(const Params<float>& params, const Vocabulary& vocab, const std::vector<ProbeSample>& samples) {
  double total = 0.0;
  std::size_t n = 0;
  std::vector<float> grad(vocab.size());
  for (const auto& s : samples) {
    if (!s.target_index) continue;
    const auto caption = retokenize(s.caption, vocab);
    const auto masked = mask_at(caption, *s.target_index);
    ForwardOptions opt;
    opt.itm = false;
    opt.mlm_positions = {ModelInput::word_position(*s.target_index)};
    const auto fwd = forward(params, encode(masked.tokens(), s.image), opt);
    total += cross_entropy<float>(std::span<const float>(fwd.mlm_logits.row(0), vocab.size()),
                                  caption.tokens[*s.target_index], grad);
    ++n;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << "step,mlm_loss,itm_loss\n";
  for (const auto& r : trace) {
    out << r.step << ',';
    fmt_double(out, r.mlm_loss);
    out << ',';
    fmt_double(out, r.itm_loss);
    out << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace vlprobe::model
