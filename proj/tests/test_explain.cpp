#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <unistd.h>

#include "support/support.hpp"
#include "vlprobe/error.hpp"
#include "vlprobe/explain/relevancy.hpp"
#include "vlprobe/explain/render.hpp"
#include "vlprobe/model/corpus.hpp"
#include "vlprobe/model/toy_backend.hpp"

using namespace vlprobe;
using namespace vlprobe::explain;
using model::AttentionTrace;
using model::Tensor;

namespace fs = std::filesystem;

namespace {

AttentionTrace constant_trace(std::size_t layers, std::size_t heads, std::size_t s, double a, double g) {
  AttentionTrace t;
  t.n_layers = layers;
  t.n_heads = heads;
  t.seq_len = s;
  t.n_text = s / 2;
  t.n_rois = s - s / 2;
  for (std::size_t i = 0; i < layers * heads; ++i) {
    Tensor<double> at(s, s), gt(s, s);
    std::fill(at.data.begin(), at.data.end(), a);
    std::fill(gt.data.begin(), gt.data.end(), g);
    t.attention.push_back(at);
    t.gradients.push_back(gt);
  }
  return t;
}

}  // namespace

TEST(Rollout, NoLayersIsIdentity) {
  const auto r = rollout(constant_trace(0, 2, 5, 0, 0));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(r(i, j), i == j ? 1.0 : 0.0);
}

TEST(Rollout, UniformAttentionClosedForm) {
  for (double g : {0.5, 1.0, 3.0}) {
    auto t = constant_trace(1, 3, 4, 0.25, g);
    t.target_position = 1;
    const auto m = relevancy_from_trace(t, model::RelevancyTarget::ItmMatch);
    EXPECT_NEAR(m.text_scores[1], 1.0 + g / 4, 1e-12);
    EXPECT_NEAR(m.text_scores[0], g / 4, 1e-12);
    for (double v : m.roi_scores) EXPECT_NEAR(v, g / 4, 1e-12);
    const auto r2 = rollout(constant_trace(2, 1, 4, 0.25, g));
    EXPECT_NEAR(r2(0, 0), 1.0 + g / 2 + g * g / 4, 1e-12);
    EXPECT_NEAR(r2(0, 3), g / 2 + g * g / 4, 1e-12);
  }
}

TEST(Rollout, NegativeGradientsAreClamped) {
  const auto r = rollout(constant_trace(3, 2, 4, 0.25, -1.0));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(r(i, j), i == j ? 1.0 : 0.0);
}

TEST(Rollout, ShapeErrors) {
  auto t = constant_trace(1, 1, 4, 0.25, 1);
  t.gradients.pop_back();
  EXPECT_THROW(rollout(t), Error);
  auto u = constant_trace(1, 1, 4, 0.25, 1);
  u.n_rois = 7;
  EXPECT_THROW(relevancy_from_trace(u, model::RelevancyTarget::ItmMatch), Error);
}

class ToyRelevancy : public ::testing::Test {
 protected:
  void SetUp() override {
    model::SyntheticCorpusSpec spec;
    spec.n_samples = 8;
    spec.d_v = 12;
    spec.pose_offset = 6;
    spec.pose_width = 6;
    corpus = model::generate_synthetic_corpus(spec);
    model::ModelConfig c;
    c.vocab_size = corpus.world.vocab->size();
    c.d_model = 16;
    c.n_heads = 2;
    c.n_layers = 2;
    c.d_v = 12;
    c.max_len = 16;
    backend = std::make_unique<model::ToyBackend>(model::Params<float>::init(c, 5), corpus.world.vocab);
  }
  model::SyntheticCorpus corpus;
  std::unique_ptr<model::ToyBackend> backend;
};

TEST_F(ToyRelevancy, LayoutAndNonNegativity) {
  const auto& s = corpus.samples[0];
  for (auto target : {model::RelevancyTarget::MaskedToken, model::RelevancyTarget::ItmMatch}) {
    const auto m = relevancy(*backend, s.image, s.caption.words, 1, target);
    EXPECT_EQ(m.text_tokens.size(), s.caption.size() + 2);
    EXPECT_EQ(m.text_tokens.front(), "[CLS]");
    EXPECT_EQ(m.roi_scores.size(), s.image.rois.size());
    EXPECT_EQ(m.target_position, target == model::RelevancyTarget::ItmMatch ? 0u : 2u);
    EXPECT_GE(m.text_scores[m.target_position], 1.0);
    for (double v : m.text_scores) EXPECT_GE(v, 0.0);
    for (double v : m.roi_scores) EXPECT_GE(v, 0.0);
  }
}

TEST_F(ToyRelevancy, PermutingRoisPermutesScores) {
  std::mt19937_64 rng(9);
  for (const auto& s : corpus.samples) {
    std::vector<std::size_t> perm(s.image.rois.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto shuffled = s.image;
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.rois[i] = s.image.rois[perm[i]];
    const auto a = relevancy(*backend, s.image, s.caption.words, 1, model::RelevancyTarget::ItmMatch);
    const auto b = relevancy(*backend, shuffled, s.caption.words, 1, model::RelevancyTarget::ItmMatch);
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_NEAR(b.roi_scores[i], a.roi_scores[perm[i]], 1e-4);
  }
}

TEST(Relevancy, NeedsAttentionCapability) {
  testkit::ConstantItmBackend be(0.5);
  std::mt19937_64 rng(1);
  try {
    relevancy(be, testkit::random_image(rng, 2, 3), {"a", "dog"}, 1, model::RelevancyTarget::ItmMatch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CapabilityError);
  }
}

TEST(Render, WritesRasterAndTokens) {
  const fs::path dir = fs::temp_directory_path() / ("vlprobe-render-" + std::to_string(::getpid()));
  std::mt19937_64 rng(2);
  const auto img = testkit::random_image(rng, 3, 4);
  RelevancyMap m;
  m.text_tokens = {"[CLS]", "dog", "[SEP]"};
  m.text_scores = {0.1, 1.2, 0.0};
  m.roi_scores = {0.5, 0.0, 0.25};
  const auto files = render_heatmap(m, img, dir, "x", 40, 30);
  std::ifstream in(files.raster, std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  EXPECT_EQ(magic, "P6");
  EXPECT_EQ(w, 40u);
  EXPECT_EQ(h, 30u);
  EXPECT_EQ(maxval, 255u);
  std::string pixels((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(pixels.size(), 40u * 30u * 3u);
  std::ifstream tsv(files.tokens);
  std::size_t lines = 0;
  for (std::string line; std::getline(tsv, line);) ++lines;
  EXPECT_EQ(lines, 6u);
  fs::remove_all(dir);
}
