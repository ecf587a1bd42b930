#include "vlprobe/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "vlprobe/error.hpp"

namespace vlprobe::cli {

namespace {

using I = std::int64_t;

const KeySpec& spec_of(std::string_view key) {
  for (const auto& s : config_schema())
    if (s.name == key) return s;
  fail(ErrorKind::UsageError, "unknown config key '" + std::string(key) + "'");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

Value parse_typed(const KeySpec& spec, std::string_view raw) {
  raw = trim(raw);
  auto bad = [&]() -> Value {
    static constexpr const char* names[] = {"integer", "number", "boolean", "string"};
    fail(ErrorKind::UsageError, "config key '" + spec.name + "' expects a " + names[static_cast<int>(spec.type)] +
                                    ", got '" + std::string(raw) + "'");
  };
  switch (spec.type) {
    case ValueType::Int: {
      I v = 0;
      auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || p != raw.data() + raw.size() || raw.empty()) return bad();
      return v;
    }
    case ValueType::Float: {
      double v = 0;
      auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || p != raw.data() + raw.size() || raw.empty()) return bad();
      return v;
    }
    case ValueType::Bool:
      if (raw == "true" || raw == "1" || raw == "yes") return true;
      if (raw == "false" || raw == "0" || raw == "no") return false;
      return bad();
    case ValueType::String:
      if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') raw = raw.substr(1, raw.size() - 2);
      return std::string(raw);
  }
  return bad();
}

ValueType type_of(const Value& v) { return static_cast<ValueType>(v.index()); }

}  // namespace

const std::vector<KeySpec>& config_schema() {
  static const std::vector<KeySpec> schema = {
      {"backend", ValueType::String, std::string(), "toy:<checkpoint> or remote:<host:port>"},
      {"dataset", ValueType::String, std::string(), "dataset file or directory"},
      {"format", ValueType::String, std::string("svo"), "dataset format: svo or coco"},
      {"rois", ValueType::String, std::string(), "ROI directory (default: <dataset dir>/rois)"},
      {"activities", ValueType::String, std::string(), "coco activity file"},
      {"out", ValueType::String, std::string("out"), "output directory"},
      {"seed", ValueType::Int, I{1}, "run seed"},
      {"workers", ValueType::Int, I{1}, "parallel evaluation workers"},
      {"k", ValueType::Int, I{5}, "top-k cutoff"},
      {"conditions", ValueType::String, std::string("guided,subject_ablation,whole_image,text_only"),
       "probing conditions"},
      {"itm_threshold", ValueType::Float, 0.5, "match threshold on the ITM probability"},
      {"itm_ablation", ValueType::String, std::string("none,subject,whole"), "ITM ablations to run"},
      {"remote_topk", ValueType::Int, I{50}, "tokens requested from a remote backend"},
      {"remote_timeout_ms", ValueType::Int, I{60000}, "remote backend response timeout"},
      {"sample", ValueType::String, std::string(), "sample id for explain"},
      {"target", ValueType::String, std::string("mlm"), "explain readout: mlm or itm"},
      {"world_seed", ValueType::Int, I{1}, "synthetic world seed"},
      {"n_samples", ValueType::Int, I{5000}, "synthetic sample count"},
      {"n_subjects", ValueType::Int, I{12}, "synthetic subjects"},
      {"n_verbs_per_subject", ValueType::Int, I{8}, "verbs per subject"},
      {"n_objects", ValueType::Int, I{12}, "synthetic objects"},
      {"n_distractor_rois", ValueType::Int, I{3}, "distractor ROIs per image"},
      {"d_v", ValueType::Int, I{32}, "ROI feature dimension"},
      {"identity_noise", ValueType::Float, 0.1, "noise on ROI identity channels"},
      {"negatives", ValueType::Bool, true, "gen: add one verb-swapped negative per sample"},
      {"corpus_seed", ValueType::Int, I{1}, "sample seed of the training corpus"},
      {"steps", ValueType::Int, I{10000}, "training steps"},
      {"batch", ValueType::Int, I{32}, "training batch size"},
      {"lr", ValueType::Float, 1e-3, "Adam learning rate"},
      {"mlm_mask_prob", ValueType::Float, 0.15, "MLM masking probability"},
      {"itm_pair_prob", ValueType::Float, 0.5, "share of full-view training pairs used for ITM"},
      {"itm_neg_prob", ValueType::Float, 0.5, "ITM negative probability"},
      {"feature_drop_prob", ValueType::Float, 0.3, "probability of a degraded visual input"},
      {"d_model", ValueType::Int, I{64}, "model width"},
      {"n_heads", ValueType::Int, I{4}, "attention heads"},
      {"n_layers", ValueType::Int, I{2}, "transformer layers"},
      {"max_len", ValueType::Int, I{32}, "maximum sequence length"},
      {"init_seed", ValueType::Int, I{1}, "parameter initialisation seed"},
  };
  return schema;
}

std::string format_value(const Value& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else {
          char buf[64];
          auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
          return std::string(buf, p);
        }
      },
      v);
}

Config::Config() {
  for (const auto& s : config_schema()) values_.emplace(s.name, s.default_value);
}

Config Config::parse(std::string_view text, std::string_view origin) {
  Config c;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorKind::UsageError, std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      fail(e.kind(), std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(std::string_view key, std::string_view value) {
  const auto& spec = spec_of(key);
  values_.insert_or_assign(spec.name, parse_typed(spec, value));
}

void Config::set_value(std::string_view key, Value value) {
  const auto& spec = spec_of(key);
  if (spec.type == ValueType::Float && type_of(value) == ValueType::Int)
    value = static_cast<double>(std::get<I>(value));
  if (type_of(value) != spec.type) fail(ErrorKind::UsageError, "config key '" + spec.name + "' has the wrong type");
  values_.insert_or_assign(spec.name, std::move(value));
}

void Config::assign(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) fail(ErrorKind::UsageError, "expected key=value, got '" + std::string(assignment) + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const Value& Config::at(std::string_view key, ValueType type) const {
  const auto& spec = spec_of(key);
  if (spec.type != type) fail(ErrorKind::UsageError, "config key '" + spec.name + "' read with the wrong type");
  return values_.find(key)->second;
}

std::int64_t Config::get_int(std::string_view key) const { return std::get<I>(at(key, ValueType::Int)); }

std::size_t Config::get_size(std::string_view key) const {
  const auto v = get_int(key);
  if (v < 0) fail(ErrorKind::UsageError, "config key '" + std::string(key) + "' must not be negative");
  return static_cast<std::size_t>(v);
}

double Config::get_float(std::string_view key) const { return std::get<double>(at(key, ValueType::Float)); }
bool Config::get_bool(std::string_view key) const { return std::get<bool>(at(key, ValueType::Bool)); }
const std::string& Config::get_string(std::string_view key) const {
  return std::get<std::string>(at(key, ValueType::String));
}

const Value& Config::get(std::string_view key) const { return values_.find(spec_of(key).name)->second; }

bool Config::is_default(std::string_view key) const { return values_.find(key)->second == spec_of(key).default_value; }

std::string Config::to_text() const {
  std::string out;
  for (const auto& s : config_schema()) {
    const auto& v = values_.find(s.name)->second;
    out += s.name + " = ";
    out += type_of(v) == ValueType::String ? "\"" + format_value(v) + "\"" : format_value(v);
    out += "\n";
  }
  return out;
}

nlohmann::ordered_json Config::to_json() const {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& s : config_schema()) {
    std::visit([&](const auto& x) { doc[s.name] = x; }, values_.find(s.name)->second);
  }
  return doc;
}

Config Config::from_json(const nlohmann::ordered_json& doc) {
  Config c;
  if (!doc.is_object()) fail(ErrorKind::SchemaError, "config snapshot is not an object");
  for (const auto& [key, value] : doc.items()) {
    const auto& spec = spec_of(key);
    switch (spec.type) {
      case ValueType::Int:
        if (!value.is_number_integer()) fail(ErrorKind::SchemaError, "config snapshot: '" + key + "' is not an integer");
        c.set_value(key, value.get<I>());
        break;
      case ValueType::Float:
        if (!value.is_number()) fail(ErrorKind::SchemaError, "config snapshot: '" + key + "' is not a number");
        c.set_value(key, value.get<double>());
        break;
      case ValueType::Bool:
        if (!value.is_boolean()) fail(ErrorKind::SchemaError, "config snapshot: '" + key + "' is not a boolean");
        c.set_value(key, value.get<bool>());
        break;
      case ValueType::String:
        if (!value.is_string()) fail(ErrorKind::SchemaError, "config snapshot: '" + key + "' is not a string");
        c.set_value(key, value.get<std::string>());
        break;
    }
  }
  return c;
}

}  // namespace vlprobe::cli
