#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "support/support.hpp"
#include "vlprobe/error.hpp"
#include "vlprobe/model/checkpoint.hpp"
#include "vlprobe/model/corpus.hpp"
#include "vlprobe/model/toy_backend.hpp"
#include "vlprobe/model/trainer.hpp"
#include "vlprobe/model/transformer.hpp"

using namespace vlprobe;
using namespace vlprobe::model;

namespace {

ModelConfig tiny_config(std::size_t vocab = 20) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_v = 6;
  c.max_len = 12;
  return c;
}

ModelInput tiny_input(std::mt19937_64& rng, std::size_t n_rois = 3) {
  std::vector<TokenId> words = {7, Vocabulary::kMask, 9};
  return encode(words, testkit::random_image(rng, n_rois, 6));
}

ForwardOptions mlm_at(std::size_t pos) {
  ForwardOptions o;
  o.mlm_positions = {pos};
  return o;
}

}  // namespace

TEST(Forward, SoftmaxNormalised) {
  std::mt19937_64 rng(1);
  const auto p = Params<float>::init(tiny_config(), 1);
  const auto in = tiny_input(rng);
  ForwardOptions o;
  o.mlm_positions = {1, 2, 3};
  const auto r = forward(p, in, o);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto probs = softmax<float>({r.mlm_logits.row(i), r.mlm_logits.cols});
    double sum = 0;
    for (float v : probs) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Forward, ZeroFeatureEqualsZeroedProjection) {
  std::mt19937_64 rng(2);
  auto p = Params<float>::init(tiny_config(), 2);
  auto img = testkit::random_image(rng, 3, 6);
  std::vector<TokenId> words = {7, Vocabulary::kMask, 9};
  auto zeroed_img = img;
  for (auto& roi : zeroed_img.rois) std::fill(roi.feature.begin(), roi.feature.end(), 0.0f);
  const auto a = forward(p, encode(words, zeroed_img), mlm_at(2));
  auto q = p;
  q.roi_proj.zero();
  const auto b = forward(q, encode(words, zeroed_img), mlm_at(2));
  EXPECT_EQ(a.mlm_logits, b.mlm_logits);
  EXPECT_EQ(a.itm_logits, b.itm_logits);
}

TEST(Forward, PermutingIdenticalBoxRoisLeavesTextLogits) {
  std::mt19937_64 rng(3);
  const auto p = Params<double>::init(tiny_config(), 3);
  auto img = testkit::random_image(rng, 4, 6);
  img.rois[3].bbox = img.rois[2].bbox;
  auto swapped = img;
  std::swap(swapped.rois[2], swapped.rois[3]);
  std::vector<TokenId> words = {7, Vocabulary::kMask, 9};
  ForwardOptions o;
  o.mlm_positions = {0, 1, 2, 3, 4};
  const auto a = forward(p, encode(words, img), o);
  const auto b = forward(p, encode(words, swapped), o);
  for (std::size_t i = 0; i < a.mlm_logits.size(); ++i) EXPECT_NEAR(a.mlm_logits.data[i], b.mlm_logits.data[i], 1e-12);
}

TEST(Forward, ShapeErrors) {
  std::mt19937_64 rng(4);
  const auto p = Params<float>::init(tiny_config(), 4);
  std::vector<TokenId> words(20, 7);
  EXPECT_THROW(forward(p, encode(words, testkit::random_image(rng, 1, 6)), {}), Error);
  std::vector<TokenId> ok = {7};
  EXPECT_THROW(forward(p, encode(ok, testkit::random_image(rng, 1, 5)), {}), Error);
  std::vector<TokenId> oov = {99};
  EXPECT_THROW(forward(p, encode(oov, testkit::random_image(rng, 1, 6)), {}), Error);
}

TEST(Backward, GradientCheckOneLayer) {
  for (const auto& t : testkit::gradient_check(16, 1, 2, 7)) EXPECT_LT(t.rel_error, 1e-4) << t.name;
}

TEST(Backward, GradientCheckTwoLayers) {
  for (const auto& t : testkit::gradient_check(8, 2, 2, 9)) EXPECT_LT(t.rel_error, 1e-4) << t.name;
}

TEST(Backward, UnusedHeadGetsZeroGradient) {
  std::mt19937_64 rng(5);
  const auto p = Params<double>::init(tiny_config(), 5);
  const auto in = tiny_input(rng);
  ForwardOptions o = mlm_at(2);
  o.itm = false;
  const auto r = forward(p, in, o);
  Tensor<double> d(1, p.config.vocab_size);
  cross_entropy<double>({r.mlm_logits.row(0), r.mlm_logits.cols}, 8, {d.row(0), d.cols}, 1.0);
  auto g = Params<double>::zeros(p.config);
  backward(p, in, r, d, {}, g);
  for (double v : g.itm_head.data) EXPECT_EQ(v, 0.0);
  for (double v : g.itm_bias.data) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LinearInLossScale) {
  std::mt19937_64 rng(6);
  const auto p = Params<double>::init(tiny_config(), 6);
  const auto in = tiny_input(rng);
  const auto r = forward(p, in, mlm_at(2));
  Tensor<double> d1(1, p.config.vocab_size), d2(1, p.config.vocab_size);
  std::vector<double> i1(2), i2(2);
  cross_entropy<double>({r.mlm_logits.row(0), r.mlm_logits.cols}, 8, {d1.row(0), d1.cols}, 1.0);
  cross_entropy<double>({r.mlm_logits.row(0), r.mlm_logits.cols}, 8, {d2.row(0), d2.cols}, 2.0);
  cross_entropy<double>(r.itm_logits, 1, i1, 1.0);
  cross_entropy<double>(r.itm_logits, 1, i2, 2.0);
  auto g1 = Params<double>::zeros(p.config), g2 = Params<double>::zeros(p.config);
  backward(p, in, r, d1, std::span<const double>(i1), g1);
  backward(p, in, r, d2, std::span<const double>(i2), g2);
  std::vector<const Tensor<double>*> a, b;
  g1.for_each([&](const std::string&, const Tensor<double>& t) { a.push_back(&t); });
  g2.for_each([&](const std::string&, const Tensor<double>& t) { b.push_back(&t); });
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i]->size(); ++j) EXPECT_NEAR(2.0 * a[i]->data[j], b[i]->data[j], 1e-12);
}

TEST(Corpus, VerbUniformGivenText) {
  SyntheticCorpusSpec spec;
  const auto c = generate_synthetic_corpus(spec);
  ASSERT_EQ(c.samples.size() % spec.n_verbs_per_subject, 0u);
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::size_t>> counts;
  for (const auto& s : c.samples) counts[{s.caption.words[0], s.caption.words[2]}][s.caption.words[1]]++;
  for (const auto& [ctx, verbs] : counts) {
    EXPECT_EQ(verbs.size(), spec.n_verbs_per_subject);
    double total = 0;
    for (const auto& [v, n] : verbs) total += static_cast<double>(n);
    double h = 0;
    for (const auto& [v, n] : verbs) {
      const double q = static_cast<double>(n) / total;
      h -= q * std::log(q);
    }
    EXPECT_NEAR(h, std::log(8.0), 1e-12);
  }
}

TEST(Corpus, PoseChannelsDeterministic) {
  const auto c = generate_synthetic_corpus({});
  std::map<std::pair<std::string, std::string>, std::vector<float>> pose;
  for (const auto& s : c.samples) {
    for (const auto& roi : s.image.rois) {
      if (roi.label != s.subject_word) continue;
      std::vector<float> p(roi.feature.begin() + 16, roi.feature.begin() + 32);
      auto [it, fresh] = pose.emplace(std::make_pair(s.subject_word, s.verb), p);
      if (!fresh) EXPECT_EQ(it->second, p);
    }
  }
  EXPECT_GT(pose.size(), 10u);
}

TEST(Corpus, SubjectLabelMatchesCaptionWord) {
  const auto c = generate_synthetic_corpus({});
  for (const auto& s : c.samples) {
    std::size_t hits = 0;
    for (const auto& roi : s.image.rois) hits += roi.label == s.caption.words[0];
    EXPECT_EQ(hits, 1u);
    EXPECT_GE(s.image.rois.size(), 2u + c.world.spec.n_distractor_rois);
  }
}

TEST(Corpus, Deterministic) {
  const auto a = generate_synthetic_corpus({});
  const auto b = generate_synthetic_corpus({});
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].caption, b.samples[i].caption);
    EXPECT_EQ(a.samples[i].image, b.samples[i].image);
  }
}

TEST(Corpus, ItmSetAlternatesWithVerbFoils) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 64;
  const auto c = generate_synthetic_corpus(spec);
  const auto set = make_itm_set(c, 3);
  ASSERT_EQ(set.size(), 2 * c.samples.size());
  for (std::size_t i = 0; i < set.size(); i += 2) {
    EXPECT_EQ(set[i].pair_label, PairLabel::Positive);
    EXPECT_EQ(set[i + 1].pair_label, PairLabel::Negative);
    EXPECT_EQ(set[i + 1].foil_kind, FoilKind::Verb);
    EXPECT_NE(set[i].caption.words[1], set[i + 1].caption.words[1]);
    EXPECT_EQ(set[i].image, set[i + 1].image);
  }
}

TEST(Train, ZeroStepsIsIdentity) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 64;
  const auto c = generate_synthetic_corpus(spec);
  ModelConfig mc = tiny_config(c.world.vocab->size());
  mc.d_v = spec.d_v;
  const auto p = Params<float>::init(mc, 1);
  TrainConfig tc;
  tc.steps = 0;
  EXPECT_EQ(train(p, c, tc).params, p);
}

TEST(Train, SameSeedSameTrace) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 64;
  const auto c = generate_synthetic_corpus(spec);
  ModelConfig mc = tiny_config(c.world.vocab->size());
  mc.d_v = spec.d_v;
  TrainConfig tc;
  tc.steps = 15;
  tc.batch = 4;
  const auto a = train(Params<float>::init(mc, 1), c, tc);
  const auto b = train(Params<float>::init(mc, 1), c, tc);
  ASSERT_EQ(a.trace.size(), 15u);
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].mlm_loss, b.trace[i].mlm_loss);
    EXPECT_EQ(a.trace[i].itm_loss, b.trace[i].itm_loss);
  }
  EXPECT_EQ(a.params, b.params);
}

TEST(Train, DivergenceDetected) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 64;
  const auto c = generate_synthetic_corpus(spec);
  ModelConfig mc = tiny_config(c.world.vocab->size());
  mc.d_v = spec.d_v;
  auto p = Params<float>::init(mc, 1);
  p.text_embed.data[10] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig tc;
  tc.steps = 2;
  tc.batch = 2;
  try {
    train(p, c, tc);
    FAIL() << "expected TrainingDiverged";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TrainingDiverged);
  }
}

TEST(Checkpoint, BitExactRoundTrip) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 64;
  const auto c = generate_synthetic_corpus(spec);
  ModelConfig mc = tiny_config(c.world.vocab->size());
  mc.d_v = spec.d_v;
  TrainConfig tc;
  tc.steps = 3;
  tc.batch = 2;
  auto r = train(Params<float>::init(mc, 2), c, tc);
  r.params.text_embed.data[0] = -0.0f;
  r.params.text_embed.data[1] = std::numeric_limits<float>::denorm_min();
  std::stringstream ss;
  write_checkpoint(ss, {r.params, c.world.vocab, r.optimizer});
  const std::string bytes = ss.str();
  std::stringstream in(bytes);
  const auto back = read_checkpoint(in);
  EXPECT_EQ(back.params.config, r.params.config);
  std::vector<const Tensor<float>*> a, b;
  r.params.for_each([&](const std::string&, const Tensor<float>& t) { a.push_back(&t); });
  back.params.for_each([&](const std::string&, const Tensor<float>& t) { b.push_back(&t); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(std::memcmp(a[i]->data.data(), b[i]->data.data(), a[i]->size() * sizeof(float)), 0);
  EXPECT_EQ(*back.vocab, *c.world.vocab);
  ASSERT_TRUE(back.optimizer);
  EXPECT_EQ(back.optimizer->step, r.optimizer.step);
  EXPECT_EQ(back.optimizer->m, r.optimizer.m);
  std::stringstream again;
  write_checkpoint(again, back);
  EXPECT_EQ(again.str(), bytes);
}

TEST(Checkpoint, RejectsCorruption) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 8;
  const auto c = generate_synthetic_corpus(spec);
  ModelConfig mc = tiny_config(c.world.vocab->size());
  mc.d_v = spec.d_v;
  std::stringstream ss;
  write_checkpoint(ss, {Params<float>::init(mc, 1), c.world.vocab, std::nullopt});
  std::string bytes = ss.str();
  auto expect_schema = [](std::string b) {
    std::stringstream in(b);
    try {
      read_checkpoint(in);
      ADD_FAILURE() << "accepted a corrupt checkpoint";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::SchemaError);
    }
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_schema(bad_magic);
  auto bad_version = bytes;
  bad_version[4] = 9;
  expect_schema(bad_version);
  expect_schema(bytes.substr(0, bytes.size() - 3));
  expect_schema(bytes + "x");
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt"), Error);
}

TEST(ToyBackend, PureAndNormalised) {
  SyntheticCorpusSpec spec;
  spec.n_samples = 16;
  const auto c = generate_synthetic_corpus(spec);
  ModelConfig mc = tiny_config(c.world.vocab->size());
  mc.d_v = spec.d_v;
  ToyBackend be(Params<float>::init(mc, 3), c.world.vocab);
  for (const auto& s : c.samples) {
    const auto m = mask_at(s.caption, 1);
    const auto a = be.predict_masked(s.image, m);
    const auto b = be.predict_masked(s.image, m);
    EXPECT_EQ(a.probs(), b.probs());
    double sum = 0;
    for (double p : a.probs()) {
      EXPECT_GE(p, 0.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
    const double q = be.itm_probability(s.image, s.caption);
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 1.0);
  }
}

TEST(PredictionDistribution, TopKSkipsSpecialsAndBreaksTiesByLowerId) {
  std::vector<std::string> words = {"x", "y", "z"};
  auto v = std::make_shared<const Vocabulary>(words);
  std::vector<double> p(v->size(), 0.0);
  p[Vocabulary::kPad] = 0.4;
  p[Vocabulary::kMask] = 0.3;
  p[v->id("z")] = 0.1;
  p[v->id("y")] = 0.1;
  p[v->id("x")] = 0.1;
  const PredictionDistribution d(v, p);
  EXPECT_EQ(d.top_k(3), (std::vector<TokenId>{v->id("x"), v->id("y"), v->id("z")}));
  EXPECT_EQ(d.top_k(4).back(), Vocabulary::kUnk);
  EXPECT_EQ(d.top_k(100).size(), 4u);
}

TEST(PredictionDistribution, RejectsBadVectors) {
  std::vector<std::string> words = {"x"};
  auto v = std::make_shared<const Vocabulary>(words);
  EXPECT_THROW(PredictionDistribution(v, std::vector<double>(6, 0.1)), Error);
  std::vector<double> neg = {1.2, -0.2, 0, 0, 0, 0};
  EXPECT_THROW(PredictionDistribution(v, neg), Error);
  EXPECT_THROW(PredictionDistribution(v, std::vector<double>(3, 0.5)), Error);
}
