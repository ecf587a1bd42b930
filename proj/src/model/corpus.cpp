#include "vlprobe/model/corpus.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "vlprobe/error.hpp"

namespace vlprobe::model {

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<float> gaussian_code(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

template <typename T>
std::vector<T> take_shuffled(const std::vector<T>& pool, std::size_t n, std::mt19937_64& rng) {
  std::vector<T> copy = pool;
  std::shuffle(copy.begin(), copy.end(), rng);
  copy.resize(n);
  return copy;
}

BBox random_box(std::mt19937_64& rng, double min_size, double max_size) {
  std::uniform_real_distribution<double> size(min_size, max_size);
  const double w = size(rng), h = size(rng);
  std::uniform_real_distribution<double> ux(0.0, 1.0 - w), uy(0.0, 1.0 - h);
  BBox b;
  b.x1 = ux(rng);
  b.y1 = uy(rng);
  b.x2 = b.x1 + w;
  b.y2 = b.y1 + h;
  return b;
}

}  // namespace

void SyntheticCorpusSpec::validate() const {
  if (n_verbs_per_subject < 8) fail(ErrorKind::UsageError, "corpus spec: n_verbs_per_subject must be >= 8");
  if (n_verbs_per_subject > verb_pool().size()) fail(ErrorKind::UsageError, "corpus spec: not enough verbs in the pool");
  if (n_subjects == 0 || n_subjects > subject_pool().size())
    fail(ErrorKind::UsageError, "corpus spec: n_subjects must be in [1, " + std::to_string(subject_pool().size()) + "]");
  if (n_objects == 0 || n_objects > object_pool().size())
    fail(ErrorKind::UsageError, "corpus spec: n_objects must be in [1, " + std::to_string(object_pool().size()) + "]");
  if (pose_width == 0 || pose_offset + pose_width > d_v)
    fail(ErrorKind::UsageError, "corpus spec: pose channels must lie inside d_v");
  if (pose_width == d_v) fail(ErrorKind::UsageError, "corpus spec: need at least one identity channel");
  if (n_samples == 0) fail(ErrorKind::UsageError, "corpus spec: n_samples must be positive");
}

const std::vector<VerbEntry>& verb_pool() {
  static const std::vector<VerbEntry> pool = [] {
    // lemma, 3sg, past, progressive, index of the caption form (0=3sg 1=past 2=ing)
    struct Row {
      const char* lemma;
      const char* third;
      const char* past;
      const char* ing;
      int form;
    };
    const Row rows[] = {
        {"sit", "sits", "sat", "sitting", 2},          {"stand", "stands", "stood", "standing", 0},
        {"run", "runs", "ran", "running", 1},          {"walk", "walks", "walked", "walking", 2},
        {"jump", "jumps", "jumped", "jumping", 0},     {"eat", "eats", "ate", "eating", 1},
        {"drink", "drinks", "drank", "drinking", 2},   {"ride", "rides", "rode", "riding", 0},
        {"swim", "swims", "swam", "swimming", 1},      {"climb", "climbs", "climbed", "climbing", 2},
        {"throw", "throws", "threw", "throwing", 0},   {"catch", "catches", "caught", "catching", 1},
        {"kick", "kicks", "kicked", "kicking", 2},     {"push", "pushes", "pushed", "pushing", 0},
        {"pull", "pulls", "pulled", "pulling", 1},     {"carry", "carries", "carried", "carrying", 2},
        {"hold", "holds", "held", "holding", 0},       {"read", "reads", "read", "reading", 2},
        {"write", "writes", "wrote", "writing", 1},    {"sing", "sings", "sang", "singing", 0},
        {"dance", "dances", "danced", "dancing", 2},   {"sleep", "sleeps", "slept", "sleeping", 1},
        {"lie", "lies", "lay", "lying", 0},            {"fly", "flies", "flew", "flying", 2},
        {"fall", "falls", "fell", "falling", 1},       {"play", "plays", "played", "playing", 0},
        {"paint", "paints", "painted", "painting", 2}, {"cook", "cooks", "cooked", "cooking", 1},
        {"wash", "washes", "washed", "washing", 0},    {"clean", "cleans", "cleaned", "cleaning", 2},
        {"watch", "watches", "watched", "watching", 1}, {"chase", "chases", "chased", "chasing", 0},
        {"feed", "feeds", "fed", "feeding", 2},        {"hug", "hugs", "hugged", "hugging", 1},
        {"kiss", "kisses", "kissed", "kissing", 0},    {"lift", "lifts", "lifted", "lifting", 2},
        {"drive", "drives", "drove", "driving", 1},    {"skate", "skates", "skated", "skating", 0},
        {"surf", "surfs", "surfed", "surfing", 2},     {"kneel", "kneels", "knelt", "kneeling", 1},
        {"crawl", "crawls", "crawled", "crawling", 0}, {"bite", "bites", "bit", "biting", 2},
        {"hit", "hits", "hit", "hitting", 0},          {"shake", "shakes", "shook", "shaking", 1},
        {"dig", "digs", "dug", "digging", 2},          {"swing", "swings", "swung", "swinging", 0},
        {"wave", "waves", "waved", "waving", 1},       {"sweep", "sweeps", "swept", "sweeping", 2},
    };
    std::vector<VerbEntry> out;
    for (const auto& r : rows) {
      VerbEntry v{r.lemma, r.third, r.past, r.ing, ""};
      v.caption_form = r.form == 0 ? v.third_person : r.form == 1 ? v.past : v.progressive;
      out.push_back(std::move(v));
    }
    return out;
  }();
  return pool;
}

const std::vector<std::string>& subject_pool() {
  static const std::vector<std::string> pool = {
      "woman", "man",      "girl",  "boy",  "child",   "person",  "player", "dog",
      "cat",   "horse",    "bird",  "cow",  "sheep",   "elephant", "giraffe", "monkey",
      "skier", "surfer",   "rider", "worker", "chef",  "student", "baby",   "lady"};
  return pool;
}

const std::vector<std::string>& object_pool() {
  static const std::vector<std::string> pool = {
      "grass", "beach",    "trail",  "street",   "bench",  "road",   "river",   "ball",
      "kite",  "frisbee",  "boat",   "wall",     "sand",   "couch",  "car",     "hill",
      "lake",  "bridge",   "stage",  "court",    "sidewalk", "mountain", "meadow", "forest",
      "yard",  "porch",    "garden", "window",   "doorway", "kitchen"};
  return pool;
}

const std::vector<std::string>& distractor_pool() {
  static const std::vector<std::string> pool = {"tree",  "sky",  "building", "cloud",  "lamp",   "sign",
                                                "pole",  "chair", "bag",     "hat",    "shirt",  "bottle",
                                                "cup",   "plant", "flower",  "umbrella"};
  return pool;
}

std::vector<std::string> synthetic_vocabulary_words() {
  std::vector<std::string> words = {"a", "an", "the", "on", "in", "with", "at", "is", "are", "and"};
  std::set<std::string> seen(words.begin(), words.end());
  auto add = [&](const std::string& w) {
    if (seen.insert(w).second) words.push_back(w);
  };
  for (const auto& w : subject_pool()) add(w);
  for (const auto& w : object_pool()) add(w);
  for (const auto& w : distractor_pool()) add(w);
  for (const auto& v : verb_pool()) {
    add(v.lemma);
    add(v.third_person);
    add(v.past);
    add(v.progressive);
  }
  return words;
}

std::size_t SyntheticWorld::verb_index(const std::string& lemma) const {
  for (std::size_t i = 0; i < verbs.size(); ++i)
    if (verbs[i].lemma == lemma) return i;
  fail(ErrorKind::SchemaError, "unknown synthetic verb: " + lemma);
}

std::vector<float> SyntheticWorld::label_code(const std::string& label) const {
  return gaussian_code(fnv1a(label, spec.seed), spec.d_v - spec.pose_width);
}

SyntheticWorld make_world(const SyntheticCorpusSpec& spec) {
  spec.validate();
  SyntheticWorld w;
  w.spec = spec;
  const auto words = synthetic_vocabulary_words();
  w.vocab = std::make_shared<const Vocabulary>(words);
  std::mt19937_64 rng(spec.seed);
  w.subjects = take_shuffled(subject_pool(), spec.n_subjects, rng);
  w.objects = take_shuffled(object_pool(), spec.n_objects, rng);
  w.distractor_labels = distractor_pool();
  w.verbs = verb_pool();
  std::vector<std::size_t> all(w.verbs.size());
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    auto chosen = take_shuffled(all, spec.n_verbs_per_subject, rng);
    std::sort(chosen.begin(), chosen.end());
    w.verbs_of_subject.push_back(std::move(chosen));
  }
  for (const auto& v : w.verbs) w.verb_codes.push_back(gaussian_code(fnv1a("verb:" + v.lemma, spec.seed), spec.pose_width));
  return w;
}

namespace {

RoiFeature make_roi(const SyntheticWorld& w, const std::string& label, const std::vector<float>& pose, const BBox& box,
                    double score, std::mt19937_64& rng) {
  const auto& spec = w.spec;
  std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.identity_noise));
  const auto code = w.label_code(label);
  RoiFeature roi;
  roi.bbox = box;
  roi.label = label;
  roi.score = score;
  roi.feature.resize(spec.d_v);
  std::size_t c = 0;
  for (std::size_t k = 0; k < spec.d_v; ++k) {
    if (k >= spec.pose_offset && k < spec.pose_offset + spec.pose_width)
      roi.feature[k] = pose[k - spec.pose_offset];
    else
      roi.feature[k] = code[c++] + noise(rng);
  }
  return roi;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  SyntheticCorpus corpus;
  corpus.world = make_world(spec);
  const auto& w = corpus.world;
  std::mt19937_64 rng(spec.sample_seed * 0x2545F4914F6CDD1DULL + spec.seed);
  std::uniform_int_distribution<std::size_t> pick_subject(0, spec.n_subjects - 1);
  std::uniform_int_distribution<std::size_t> pick_object(0, spec.n_objects - 1);
  std::uniform_int_distribution<std::size_t> pick_any_verb(0, w.verbs.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_distractor(0, w.distractor_labels.size() - 1);
  std::uniform_real_distribution<double> score(0.5, 1.0);

  const std::size_t nv = spec.n_verbs_per_subject;
  const std::size_t n_blocks = (spec.n_samples + nv - 1) / nv;
  std::size_t serial = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    // Each block emits every verb of one (subject, object) pair once, which
    // keeps the verb exactly uniform given the rest of the caption.
    const std::size_t s = pick_subject(rng);
    const std::size_t o = pick_object(rng);
    for (std::size_t vi : w.verbs_of_subject[s]) {
      const auto& subject = w.subjects[s];
      const auto& object = w.objects[o];
      const auto& verb = w.verbs[vi];
      VisualInput image;
      image.image_id = "syn" + std::to_string(spec.seed) + "-" + std::to_string(spec.sample_seed) + "-" +
                       std::to_string(serial++);
      image.rois.push_back(make_roi(w, subject, w.verb_codes[vi], random_box(rng, 0.25, 0.5), score(rng), rng));
      image.rois.push_back(
          make_roi(w, object, w.verb_codes[pick_any_verb(rng)], random_box(rng, 0.2, 0.5), score(rng), rng));
      for (std::size_t k = 0; k < spec.n_distractor_rois; ++k)
        image.rois.push_back(make_roi(w, w.distractor_labels[pick_distractor(rng)], w.verb_codes[pick_any_verb(rng)],
                                      random_box(rng, 0.1, 0.4), score(rng), rng));
      std::shuffle(image.rois.begin(), image.rois.end(), rng);

      ProbeSample sample;
      sample.id = image.image_id;
      sample.image = std::move(image);
      sample.caption = tokenize(subject + " " + verb.caption_form + " " + object, *w.vocab);
      sample.target_index = 1;
      sample.subject_word = subject;
      sample.verb = verb.lemma;
      sample.object = object;
      sample.target_source = "gold";
      corpus.samples.push_back(std::move(sample));
    }
  }
  std::shuffle(corpus.samples.begin(), corpus.samples.end(), rng);
  return corpus;
}

ProbeSample make_verb_foil(const SyntheticWorld& world, const ProbeSample& positive, std::mt19937_64& rng) {
  const auto s_it = std::find(world.subjects.begin(), world.subjects.end(), positive.subject_word);
  if (s_it == world.subjects.end()) fail(ErrorKind::SchemaError, "verb foil: unknown subject " + positive.subject_word);
  const auto& options = world.verbs_of_subject[static_cast<std::size_t>(s_it - world.subjects.begin())];
  const std::size_t current = world.verb_index(positive.verb);
  std::uniform_int_distribution<std::size_t> pick(0, options.size() - 2);
  std::size_t k = pick(rng);
  if (options[k] == current) k = options.size() - 1;
  const auto& foil = world.verbs[options[k]];

  ProbeSample neg = positive;
  neg.id = positive.id + "-neg";
  auto words = positive.caption.words;
  words[*positive.target_index] = foil.caption_form;
  std::string raw;
  for (std::size_t i = 0; i < words.size(); ++i) raw += (i ? " " : "") + words[i];
  neg.caption = tokenize(raw, *world.vocab);
  neg.verb = foil.lemma;
  neg.pair_label = PairLabel::Negative;
  neg.foil_kind = FoilKind::Verb;
  return neg;
}

std::vector<ProbeSample> make_itm_set(const SyntheticCorpus& corpus, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ProbeSample> out;
  out.reserve(corpus.samples.size() * 2);
  for (const auto& s : corpus.samples) {
    out.push_back(s);
    out.push_back(make_verb_foil(corpus.world, s, rng));
  }
  return out;
}

}  // namespace vlprobe::model
