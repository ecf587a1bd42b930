#include "vlprobe/core/dataset.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "vlprobe/error.hpp"
#include "vlprobe/lexicon/lemmatizer.hpp"

namespace vlprobe {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

void check_image_id(const std::string& id) {
  if (id.empty() || id.front() == '.' || id.find_first_of("/\\ \t") != std::string::npos)
    fail(ErrorKind::SchemaError, "invalid image_id '" + id + "'");
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return in;
}

// Caches ROI files so an image shared by several rows is parsed once.
class RoiCache {
 public:
  explicit RoiCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const VisualInput& get(const std::string& image_id) {
    auto it = cache_.find(image_id);
    if (it != cache_.end()) return it->second;
    check_image_id(image_id);
    auto image = load_roi_features(dir_ / (image_id + ".roi"));
    image.image_id = image_id;
    return cache_.emplace(image_id, std::move(image)).first->second;
  }

 private:
  std::filesystem::path dir_;
  std::unordered_map<std::string, VisualInput> cache_;
};

void note_error(LoadStats& stats, const std::string& message) {
  if (stats.first_errors.size() < 10) stats.first_errors.push_back(message);
}

void enforce_tolerance(const LoadStats& stats, const std::filesystem::path& path) {
  if (stats.rows > 0 && static_cast<double>(stats.malformed) > kMaxMalformedFraction * static_cast<double>(stats.rows)) {
    std::string msg = path.string() + ": " + std::to_string(stats.malformed) + " of " + std::to_string(stats.rows) +
                      " rows malformed";
    if (!stats.first_errors.empty()) msg += " (first: " + stats.first_errors.front() + ")";
    fail(ErrorKind::CorruptDataset, msg);
  }
}

PairLabel parse_pair_label(const std::string& s) {
  if (s == "positive" || s == "1") return PairLabel::Positive;
  if (s == "negative" || s == "0") return PairLabel::Negative;
  fail(ErrorKind::SchemaError, "bad pair_label '" + s + "'");
}

std::optional<FoilKind> parse_foil_kind(const std::string& s) {
  if (s.empty() || s == "none" || s == "-") return std::nullopt;
  if (s == "subject") return FoilKind::Subject;
  if (s == "verb") return FoilKind::Verb;
  if (s == "object") return FoilKind::Object;
  fail(ErrorKind::SchemaError, "bad foil_kind '" + s + "'");
}

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a", "an", "the", "this", "that", "these", "those", "some", "two", "three", "several", "many",
      "of", "on", "in", "at", "with", "and", "is", "are", "his", "her", "their", "its", "to", "by"};
  return words;
}

// Nearest content word before the target; the first word when none exists.
std::string heuristic_subject(const Caption& caption, std::size_t target) {
  for (std::size_t i = target; i-- > 0;)
    if (!stopwords().contains(caption.words[i])) return caption.words[i];
  return caption.words.front();
}

}  // namespace

std::string to_string(PairLabel label) { return label == PairLabel::Positive ? "positive" : "negative"; }

std::string to_string(std::optional<FoilKind> kind) {
  if (!kind) return "none";
  switch (*kind) {
    case FoilKind::Subject: return "subject";
    case FoilKind::Verb: return "verb";
    case FoilKind::Object: return "object";
  }
  return "none";
}

void ProbeSample::validate() const {
  image.validate();
  if (caption.words.empty()) fail(ErrorKind::EmptyCaption, "sample " + id + ": empty caption");
  if (caption.words.size() != caption.tokens.size()) fail(ErrorKind::SchemaError, "sample " + id + ": token/word misalignment");
  if (target_index && *target_index >= caption.size()) fail(ErrorKind::BadIndex, "sample " + id + ": target index out of range");
  if (pair_label == PairLabel::Positive && foil_kind) fail(ErrorKind::SchemaError, "sample " + id + ": positive pair with a foil kind");
}

LoadedDataset load_svo_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                               const lexicon::Lemmatizer& lemmatizer,
                               std::optional<std::filesystem::path> roi_dir) {
  auto in = open_or_throw(path);
  RoiCache rois(roi_dir ? *roi_dir : path.parent_path() / "rois");
  LoadedDataset out;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::SchemaError, path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSvoHeader) fail(ErrorKind::SchemaError, path.string() + ": header does not match SVO schema");

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    ++out.stats.rows;
    try {
      auto f = split_tabs(line);
      if (f.size() != 7) fail(ErrorKind::SchemaError, "expected 7 fields, got " + std::to_string(f.size()));
      ProbeSample s;
      s.id = f[0] + "#" + std::to_string(line_no);
      s.caption = tokenize(f[1], vocab);
      s.subject_word = f[2];
      s.verb = f[3];
      s.object = f[4];
      s.pair_label = parse_pair_label(f[5]);
      s.foil_kind = parse_foil_kind(f[6]);
      if (s.subject_word.empty() || s.verb.empty()) fail(ErrorKind::SchemaError, "empty subject or verb");
      const std::string verb_lemma = lemmatizer.lemmatize(s.verb);
      for (std::size_t i = 0; i < s.caption.size(); ++i) {
        if (lemmatizer.lemmatize(s.caption.words[i]) == verb_lemma) {
          s.target_index = i;
          break;
        }
      }
      if (!s.target_index) fail(ErrorKind::NoTargetWord, "verb '" + s.verb + "' not found in caption");
      s.image = rois.get(f[0]);
      s.validate();
      out.samples.push_back(std::move(s));
    } catch (const Error& e) {
      ++out.stats.malformed;
      note_error(out.stats, path.filename().string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  enforce_tolerance(out.stats, path);
  return out;
}

void write_svo_dataset(const std::filesystem::path& dir, const std::vector<ProbeSample>& samples) {
  std::filesystem::create_directories(dir / "rois");
  std::ofstream out(dir / "dataset.tsv", std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + (dir / "dataset.tsv").string());
  out << kSvoHeader << '\n';
  std::set<std::string> written;
  for (const auto& s : samples) {
    check_image_id(s.image.image_id);
    out << s.image.image_id << '\t' << s.caption.raw << '\t' << s.subject_word << '\t' << s.verb << '\t' << s.object
        << '\t' << to_string(s.pair_label) << '\t' << to_string(s.foil_kind) << '\n';
    if (written.insert(s.image.image_id).second)
      save_roi_features(dir / "rois" / (s.image.image_id + ".roi"), s.image);
  }
  if (!out) fail(ErrorKind::IoError, "write failed: " + (dir / "dataset.tsv").string());
}

LoadedDataset load_coco_captions(const std::filesystem::path& caption_path,
                                 const std::optional<std::filesystem::path>& activity_path,
                                 const std::filesystem::path& roi_dir, const Vocabulary& vocab,
                                 const lexicon::Lemmatizer& lemmatizer) {
  std::unordered_map<std::string, std::vector<std::string>> activities;
  if (activity_path) {
    auto in = open_or_throw(*activity_path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      auto f = split_tabs(line);
      if (f.size() != 2) continue;
      auto& acts = activities[f[0]];
      std::stringstream ss(f[1]);
      std::string act;
      while (std::getline(ss, act, ','))
        if (!act.empty()) acts.push_back(lemmatizer.lemmatize(act));
    }
  }

  auto in = open_or_throw(caption_path);
  RoiCache rois(roi_dir);
  LoadedDataset out;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::SchemaError, caption_path.string() + ": missing header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    ++out.stats.rows;
    auto f = split_tabs(line);
    if (f.size() != 2) {
      ++out.stats.malformed;
      note_error(out.stats, caption_path.filename().string() + ":" + std::to_string(line_no) + ": expected 2 fields");
      continue;
    }
    ProbeSample s;
    s.id = f[0] + "#" + std::to_string(line_no);
    try {
      s.caption = tokenize(f[1], vocab);
    } catch (const Error& e) {
      ++out.stats.malformed;
      note_error(out.stats, caption_path.filename().string() + ":" + std::to_string(line_no) + ": " + e.what());
      continue;
    }
    try {
      s.image = rois.get(f[0]);
    } catch (const Error& e) {
      ++out.stats.unjoinable;
      note_error(out.stats, caption_path.filename().string() + ":" + std::to_string(line_no) + ": " + e.what());
      continue;
    }
    if (auto it = activities.find(f[0]); it != activities.end()) {
      for (std::size_t i = 0; i < s.caption.size() && !s.target_index; ++i) {
        auto lemma = lemmatizer.lemmatize(s.caption.words[i]);
        for (const auto& act : it->second)
          if (lemma == act) {
            s.target_index = i;
            s.target_source = "activity";
            break;
          }
      }
    }
    if (!s.target_index) {
      try {
        s.target_index = find_verb_index(s.caption, std::nullopt, lemmatizer);
        s.target_source = "lexicon";
      } catch (const Error&) {
        ++out.stats.no_verb;
        continue;
      }
    }
    (s.target_source == "activity" ? out.stats.activity_targets : out.stats.lexicon_targets)++;
    s.verb = s.caption.words[*s.target_index];
    s.subject_word = heuristic_subject(s.caption, *s.target_index);
    out.samples.push_back(std::move(s));
  }
  enforce_tolerance(out.stats, caption_path);
  return out;
}

}  // namespace vlprobe
