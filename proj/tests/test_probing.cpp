#include <gtest/gtest.h>

#include <atomic>
#include <functional>
#include <random>

#include "support/support.hpp"
#include "vlprobe/error.hpp"
#include "vlprobe/probing/ablation.hpp"
#include "vlprobe/probing/guided.hpp"
#include "vlprobe/probing/itm.hpp"
#include "vlprobe/probing/match.hpp"
#include "vlprobe/probing/parallel.hpp"
#include "vlprobe/probing/report.hpp"

using namespace vlprobe;
using namespace vlprobe::probing;

namespace {

const lexicon::Lexicon& lex() { return lexicon::Lexicon::builtin(); }

std::shared_ptr<const Vocabulary> small_vocab() {
  std::vector<std::string> w = {"a", "woman", "sits", "sitting", "jogging", "runs", "on", "bench", "tree", "dog"};
  return std::make_shared<const Vocabulary>(w);
}

model::PredictionDistribution peaked(std::shared_ptr<const Vocabulary> v, std::vector<std::pair<std::string, double>> mass) {
  std::vector<double> p(v->size(), 0.0);
  double left = 1.0;
  for (const auto& [w, m] : mass) {
    p[v->id(w)] += m;
    left -= m;
  }
  p[Vocabulary::kPad] += left;
  return {v, p};
}

// Predicts the caption's gold word whenever the first ROI still has features,
// and "jogging" otherwise. Samples whose id starts with "bad" raise.
class ScriptedBackend final : public model::ModelBackend {
 public:
  explicit ScriptedBackend(std::shared_ptr<const Vocabulary> v) : v_(std::move(v)) {}
  std::string name() const override { return "scripted"; }
  model::Capabilities capabilities() const override { return {true, true, false}; }
  model::PredictionDistribution predict_masked(const VisualInput& image, const MaskedCaption& m) const override {
    if (image.image_id.starts_with("bad")) fail(ErrorKind::BackendError, "scripted failure");
    const auto& f = image.rois.front().feature;
    const bool seen = std::any_of(f.begin(), f.end(), [](float x) { return x != 0.0f; });
    return peaked(v_, {{seen ? m.original_word() : "jogging", 0.6}, {"dog", 0.3}});
  }
  double itm_probability(const VisualInput&, const Caption& c) const override {
    return c.words[2] == "sits" ? 0.9 : 0.1;
  }

 private:
  std::shared_ptr<const Vocabulary> v_;
};

ProbeSample sample(const Vocabulary& v, std::string id, std::string caption, PairLabel label = PairLabel::Positive) {
  ProbeSample s;
  s.id = id;
  s.caption = tokenize(caption, v);
  s.target_index = 2;
  s.subject_word = "woman";
  s.pair_label = label;
  if (label == PairLabel::Negative) s.foil_kind = FoilKind::Verb;
  s.image.image_id = id;
  s.image.rois = {{{0.0, 0.0, 0.5, 0.5}, {1, 2}, "woman", 0.9},
                  {{0.5, 0.5, 1.0, 1.0}, {3, 4}, "bench", 0.8},
                  {{0.6, 0.0, 1.0, 0.4}, {5, 6}, "tree", 0.7}};
  return s;
}

}  // namespace

TEST(Match, LemmatizedExamples) {
  const auto v = small_vocab();
  const auto d = peaked(v, {{"sits", 0.5}, {"dog", 0.2}});
  EXPECT_TRUE(match_prediction("sitting", d, 5, lex().lemmatizer));
  EXPECT_TRUE(match_prediction("sat", d, 1, lex().lemmatizer));
  EXPECT_FALSE(match_prediction("jogging", d, 2, lex().lemmatizer));
  EXPECT_TRUE(match_prediction("jogging", d, v->size(), lex().lemmatizer));
  EXPECT_EQ(match_rank("dog", d, 5, lex().lemmatizer), 2u);
  EXPECT_THROW(match_prediction("sits", d, 0, lex().lemmatizer), Error);
}

TEST(Match, ReservedTokensNeverRank) {
  const auto v = small_vocab();
  const auto d = peaked(v, {{"[MASK]", 0.9}});
  EXPECT_FALSE(match_prediction("[MASK]", d, v->size(), lex().lemmatizer));
}

TEST(Match, MonotoneInK) {
  const auto v = small_vocab();
  std::mt19937_64 rng(3);
  std::gamma_distribution<double> g(0.5);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> p(v->size());
    double s = 0;
    for (auto& x : p) s += (x = g(rng));
    for (auto& x : p) x /= s;
    const model::PredictionDistribution d(v, p);
    const std::string& word = v->token(static_cast<TokenId>(5 + t % 10));
    bool prev = false;
    for (std::size_t k = 1; k <= v->size(); ++k) {
      const bool now = match_prediction(word, d, k, lex().lemmatizer);
      EXPECT_TRUE(!prev || now);
      prev = now;
    }
  }
}

TEST(Ablation, SubjectAndOverlaps) {
  VisualInput img;
  img.image_id = "x";
  img.rois = {{{0.5, 0.5, 1.0, 1.0}, {1, 1}, "bench", 0.9},
              {{0.0, 0.0, 0.5, 0.5}, {2, 2}, "lady", 0.4},
              {{0.4, 0.4, 0.6, 0.6}, {3, 3}, "tree", 0.5},
              {{0.5, 0.0, 1.0, 0.5}, {4, 4}, "dog", 0.6}};
  const auto r = ablate_subject(img, "woman", lex());
  EXPECT_EQ(r.trace.subject_index, 1u);
  EXPECT_FALSE(r.trace.fallback);
  EXPECT_EQ(r.trace.zeroed, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(r.image.rois[0].feature, (std::vector<float>{1, 1}));
  EXPECT_EQ(r.image.rois[1].feature, (std::vector<float>{0, 0}));
  EXPECT_EQ(r.image.rois[2].feature, (std::vector<float>{0, 0}));
  EXPECT_EQ(r.image.rois[3].feature, (std::vector<float>{4, 4}));
}

TEST(Ablation, FallbackToHighestScore) {
  VisualInput img;
  img.rois = {{{0, 0, .2, .2}, {1}, "zzq", 0.3}, {{.5, .5, 1, 1}, {1}, "qqz", 0.8}};
  const auto r = ablate_subject(img, "woman", lex());
  EXPECT_TRUE(r.trace.fallback);
  EXPECT_EQ(r.trace.subject_index, 1u);
  EXPECT_EQ(r.trace.zeroed, (std::vector<std::size_t>{1}));
}

TEST(Ablation, WholeImageKeepsGeometry) {
  std::mt19937_64 rng(4);
  const auto img = testkit::random_image(rng, 5, 7);
  const auto z = ablate_whole_image(img);
  ASSERT_EQ(z.rois.size(), img.rois.size());
  for (std::size_t i = 0; i < img.rois.size(); ++i) {
    EXPECT_EQ(z.rois[i].bbox, img.rois[i].bbox);
    EXPECT_EQ(z.rois[i].label, img.rois[i].label);
    EXPECT_EQ(z.rois[i].feature, std::vector<float>(7, 0.0f));
  }
}

TEST(Ablation, RandomPairProperties) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10000; ++t) {
    VisualInput img;
    img.image_id = "p";
    img.rois = {{testkit::random_grid_box(rng), {1, 2}, "woman", 0.9},
                {testkit::random_grid_box(rng), {3, 4}, "bench", 0.5}};
    const auto once = ablate_subject(img, "woman", lex());
    const bool overlap = testkit::overlap_oracle(img.rois[0].bbox, img.rois[1].bbox);
    ASSERT_EQ(once.image.rois[1].feature == img.rois[1].feature, !overlap);
    ASSERT_EQ(once.image.rois[0].feature, (std::vector<float>{0, 0}));
    ASSERT_EQ(once.image.rois[1].bbox, img.rois[1].bbox);
    ASSERT_EQ(ablate_subject(once.image, "woman", lex()).image, once.image);
    ASSERT_EQ(ablate_whole_image(once.image), ablate_whole_image(img));
  }
}

TEST(Itm, AverageIsWeightedMean) {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<PairLabel> labels;
    auto predicted = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels.push_back(coin(rng) ? PairLabel::Positive : PairLabel::Negative);
      predicted[i] = coin(rng);
    }
    const auto r = score_itm(labels, std::span<const bool>(predicted.get(), n));
    const double np = static_cast<double>(r.n_pos), nn = static_cast<double>(r.n_neg);
    EXPECT_EQ(r.n_pos + r.n_neg, n);
    EXPECT_NEAR(r.acc_avg, (np * r.acc_pos + nn * r.acc_neg) / (np + nn), 1e-12);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += predicted[i] == (labels[i] == PairLabel::Positive);
    EXPECT_NEAR(r.acc_avg, static_cast<double>(correct) / static_cast<double>(n), 1e-12);
  }
}

TEST(Itm, AllMatchClassifier) {
  const auto v = small_vocab();
  std::vector<ProbeSample> data;
  for (int i = 0; i < 30; ++i) data.push_back(sample(*v, "p" + std::to_string(i), "a woman sits on a bench"));
  for (int i = 0; i < 10; ++i)
    data.push_back(sample(*v, "n" + std::to_string(i), "a woman runs on a bench", PairLabel::Negative));
  const auto r = run_itm(data, testkit::ConstantItmBackend(1.0), {}, ItmAblation::None, lex());
  EXPECT_EQ(r.acc_pos, 1.0);
  EXPECT_EQ(r.acc_neg, 0.0);
  EXPECT_DOUBLE_EQ(r.acc_avg, 0.75);
  const auto s = run_itm(data, ScriptedBackend(v), {}, ItmAblation::Whole, lex());
  EXPECT_EQ(s.acc_avg, 1.0);
  EXPECT_EQ(s.ablation, "whole");
}

TEST(Itm, ThresholdIsInclusive) {
  const auto v = small_vocab();
  std::vector<ProbeSample> data = {sample(*v, "p", "a woman sits on a bench")};
  ProbeConfig c;
  c.itm_threshold = 0.25;
  EXPECT_EQ(run_itm(data, testkit::ConstantItmBackend(0.25), c, ItmAblation::None, lex()).correct_pos, 1u);
}

TEST(Guided, ConditionsOnScriptedBackend) {
  const auto v = small_vocab();
  std::vector<ProbeSample> data = {sample(*v, "s1", "a woman sitting on a bench"),
                                   sample(*v, "s2", "a woman runs on a bench", PairLabel::Negative)};
  const auto r = run_guided_masking(data, ScriptedBackend(v), {}, lex());
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].condition, "guided");
  EXPECT_EQ(r[0].n_evaluated, 1u);
  EXPECT_EQ(r[0].accuracy, 1.0);
  EXPECT_EQ(r[1].condition, "subject_ablation");
  EXPECT_EQ(r[1].accuracy, 0.0);
  EXPECT_EQ(r[1].hits_at.at(1), 0u);
  EXPECT_EQ(r[2].accuracy, 0.0);
  EXPECT_EQ(r[3].condition, "text_only");
  EXPECT_EQ(r[3].accuracy, 0.0);
}

TEST(Guided, BackendFailureCap) {
  const auto v = small_vocab();
  std::vector<ProbeSample> data;
  for (int i = 0; i < 199; ++i) data.push_back(sample(*v, "s" + std::to_string(i), "a woman sits on a bench"));
  data.push_back(sample(*v, "bad0", "a woman sits on a bench"));
  ProbeConfig c;
  c.conditions = {Condition::Guided};
  const auto r = run_guided_masking(data, ScriptedBackend(v), c, lex());
  EXPECT_EQ(r[0].n_evaluated, 199u);
  EXPECT_EQ(r[0].skipped_backend, 1u);
  EXPECT_EQ(r[0].n_evaluated + r[0].n_skipped, 200u);
  data.push_back(sample(*v, "bad1", "a woman sits on a bench"));
  data.push_back(sample(*v, "bad2", "a woman sits on a bench"));
  EXPECT_THROW(run_guided_masking(data, ScriptedBackend(v), c, lex()), Error);
}

TEST(Guided, NoTargetIsSkipped) {
  const auto v = small_vocab();
  auto s = sample(*v, "s", "a woman on a bench");
  s.target_index.reset();
  std::vector<ProbeSample> data = {s, sample(*v, "t", "a woman sits on a bench")};
  ProbeConfig c;
  c.conditions = {Condition::Guided};
  const auto r = run_guided_masking(data, ScriptedBackend(v), c, lex());
  EXPECT_EQ(r[0].n_evaluated, 1u);
  EXPECT_EQ(r[0].skipped_no_target, 1u);
}

TEST(Guided, WorkersDoNotChangeResults) {
  const auto v = small_vocab();
  std::vector<ProbeSample> data;
  for (int i = 0; i < 64; ++i)
    data.push_back(sample(*v, "s" + std::to_string(i), i % 3 ? "a woman sits on a bench" : "a woman runs on a tree"));
  ProbeConfig a, b;
  b.workers = 8;
  const auto ra = run_guided_masking(data, ScriptedBackend(v), a, lex());
  const auto rb = run_guided_masking(data, ScriptedBackend(v), b, lex());
  ProbeReport pa, pb;
  pa.conditions = ra;
  pb.conditions = rb;
  EXPECT_EQ(to_json(pa).dump(), to_json(pb).dump());
}

TEST(Config, ConditionLists) {
  EXPECT_EQ(parse_conditions("text_only,guided,text_only"),
            (std::vector<Condition>{Condition::Guided, Condition::TextOnly}));
  EXPECT_EQ(join_conditions({Condition::Guided, Condition::WholeImage}), "guided,whole_image");
  EXPECT_THROW(parse_conditions("guided,bogus"), Error);
  EXPECT_THROW(parse_conditions(""), Error);
  ProbeConfig c;
  c.k = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(report_cutoffs(5), (std::vector<std::size_t>{1, 5, 10}));
  EXPECT_EQ(report_cutoffs(20), (std::vector<std::size_t>{1, 5, 10, 20}));
}

TEST(Report, JsonRoundTrip) {
  ProbeReport r;
  r.metadata["backend"] = "scripted";
  r.metadata["k"] = 5;
  ConditionResult c;
  c.condition = "guided";
  c.n_evaluated = 10;
  c.n_skipped = 1;
  c.top_k_hits = 7;
  c.accuracy = 0.7;
  c.hits_at = {{1, 3}, {5, 7}, {10, 8}};
  r.conditions.push_back(c);
  ItmResult i;
  i.n_pos = 3;
  i.n_neg = 1;
  i.correct_pos = 3;
  i.acc_pos = 1.0;
  i.acc_avg = 0.75;
  r.itm.push_back(i);
  const auto doc = to_json(r);
  EXPECT_EQ(to_json(report_from_json(doc)).dump(), doc.dump());
  EXPECT_EQ(r.backend(), "scripted");
  const auto table = render_table(r);
  EXPECT_NE(table.find("guided"), std::string::npos);
  EXPECT_NE(table.find("70.0"), std::string::npos);
  auto bad = doc;
  bad["schema"] = "other/9";
  EXPECT_THROW(report_from_json(bad), Error);
}

TEST(Report, ComparisonHasRowPerConditionPerBackend) {
  ProbeReport a, b;
  a.metadata["backend"] = "toy:a";
  b.metadata["backend"] = "toy:b";
  for (auto* r : {&a, &b})
    for (const char* n : {"guided", "text_only"}) {
      ConditionResult c;
      c.condition = n;
      r->conditions.push_back(c);
    }
  std::vector<ProbeReport> both = {a, b};
  const auto text = render_comparison(both);
  std::size_t rows = 0;
  for (std::size_t p = 0; (p = text.find("toy:", p)) != std::string::npos; ++p) ++rows;
  EXPECT_EQ(rows, 4u);
}

TEST(Parallel, SlotsAndErrors) {
  std::vector<std::size_t> out(1000);
  parallel_for(out.size(), 8, [&](std::size_t i) { out[i] = i * i; });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], i * i);
  std::atomic<int> calls{0};
  EXPECT_THROW(parallel_for(100, 4,
                            [&](std::size_t i) {
                              ++calls;
                              if (i == 10) throw std::runtime_error("x");
                            }),
               std::runtime_error);
  parallel_for(0, 4, [](std::size_t) { FAIL(); });
}
