#include "vlprobe/cli/commands.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "vlprobe/explain/relevancy.hpp"
#include "vlprobe/explain/render.hpp"
#include "vlprobe/lexicon/lexicon.hpp"
#include "vlprobe/model/checkpoint.hpp"
#include "vlprobe/model/corpus.hpp"
#include "vlprobe/model/remote_backend.hpp"
#include "vlprobe/model/toy_backend.hpp"
#include "vlprobe/model/trainer.hpp"
#include "vlprobe/probing/guided.hpp"
#include "vlprobe/probing/itm.hpp"
#include "vlprobe/probing/report.hpp"

#ifndef VLPROBE_VERSION
#define VLPROBE_VERSION "dev"
#endif

namespace vlprobe::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kCorpusConfig = "corpus.cfg";

const std::vector<std::string> kCorpusKeys = {"world_seed", "n_subjects", "n_verbs_per_subject", "n_objects",
                                              "n_distractor_rois", "d_v", "identity_noise"};

model::SyntheticCorpusSpec corpus_spec(const Config& c, std::string_view sample_seed_key) {
  model::SyntheticCorpusSpec spec;
  spec.seed = static_cast<std::uint64_t>(c.get_int("world_seed"));
  spec.sample_seed = static_cast<std::uint64_t>(c.get_int(sample_seed_key));
  spec.n_samples = c.get_size("n_samples");
  spec.n_subjects = c.get_size("n_subjects");
  spec.n_verbs_per_subject = c.get_size("n_verbs_per_subject");
  spec.n_objects = c.get_size("n_objects");
  spec.n_distractor_rois = c.get_size("n_distractor_rois");
  spec.d_v = c.get_size("d_v");
  spec.identity_noise = c.get_float("identity_noise");
  spec.pose_width = spec.d_v / 2;
  spec.pose_offset = spec.d_v - spec.pose_width;
  spec.validate();
  return spec;
}

probing::ProbeConfig probe_config(const Config& c) {
  probing::ProbeConfig pc;
  pc.k = c.get_size("k");
  pc.conditions = probing::parse_conditions(c.get_string("conditions"));
  pc.itm_threshold = c.get_float("itm_threshold");
  pc.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  pc.workers = c.get_size("workers");
  pc.validate();
  return pc;
}

const std::string& require(const Config& c, std::string_view key) {
  const auto& v = c.get_string(key);
  if (v.empty()) fail(ErrorKind::UsageError, "missing required setting '" + std::string(key) + "'");
  return v;
}

fs::path dataset_file(const Config& c) {
  fs::path p = require(c, "dataset");
  if (c.get_string("format") == "svo" && fs::is_directory(p)) p /= "dataset.tsv";
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out.flush()) fail(ErrorKind::IoError, "write failed for " + path.string());
}

fs::path prepare_out(const Config& c) {
  fs::path out = c.get_string("out");
  if (out.empty()) fail(ErrorKind::UsageError, "missing required setting 'out'");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out.string() + ": " + ec.message());
  return out;
}

struct Run {
  RunManifest manifest;
  fs::path out;
  void output(const std::string& role, const fs::path& path) { manifest.outputs.push_back(digest(role, path)); }
  void input(const std::string& role, const fs::path& path) { manifest.inputs.push_back(digest(role, path)); }
};

void add_dataset_inputs(Run& run, const Config& c) {
  const fs::path file = dataset_file(c);
  run.input("dataset", file);
  if (c.get_string("format") == "svo") {
    const fs::path rois = c.get_string("rois").empty() ? file.parent_path() / "rois" : fs::path(c.get_string("rois"));
    if (fs::exists(rois)) run.input("rois", rois);
  } else {
    run.input("rois", require(c, "rois"));
    if (!c.get_string("activities").empty()) run.input("activities", c.get_string("activities"));
  }
}

void add_backend_inputs(Run& run, const BackendHandle& handle) {
  if (handle.checkpoint) run.input("checkpoint", *handle.checkpoint);
}

ordered_json base_metadata(std::string_view command, const Config& c, const BackendHandle& handle,
                           const LoadedDataset& data) {
  std::size_t positives = 0;
  for (const auto& s : data.samples) positives += s.pair_label == PairLabel::Positive;
  ordered_json m;
  m["command"] = command;
  m["backend"] = handle.backend->name();
  m["dataset"] = dataset_file(c).generic_string();
  m["dataset_sha256"] = sha256_file(dataset_file(c));
  if (handle.checkpoint) m["checkpoint_sha256"] = sha256_file(*handle.checkpoint);
  m["n_samples"] = data.samples.size();
  m["n_positive"] = positives;
  m["rows_malformed"] = data.stats.malformed;
  m["rows_unjoinable"] = data.stats.unjoinable;
  m["rows_without_verb"] = data.stats.no_verb;
  m["k"] = c.get_size("k");
  m["seed"] = c.get_int("seed");
  m["tool_version"] = VLPROBE_VERSION;
  return m;
}

void cmd_gen(Run& run, const Config& c, std::ostream& log) {
  const auto spec = corpus_spec(c, "seed");
  const auto corpus = model::generate_synthetic_corpus(spec);
  const auto samples = c.get_bool("negatives") ? model::make_itm_set(corpus, spec.sample_seed) : corpus.samples;
  write_svo_dataset(run.out, samples);
  std::string text;
  for (const auto& key : kCorpusKeys) text += key + " = " + format_value(c.get(key)) + "\n";
  text += "corpus_seed = " + format_value(c.get("seed")) + "\n";
  text += "n_samples = " + format_value(c.get("n_samples")) + "\n";
  write_text(run.out / kCorpusConfig, text);
  run.output("dataset", run.out / "dataset.tsv");
  run.output("rois", run.out / "rois");
  run.output("corpus_config", run.out / kCorpusConfig);
  log << "gen: wrote " << samples.size() << " samples to " << run.out.string() << "\n";
}

void cmd_train(Run& run, Config c, std::ostream& log) {
  if (!c.get_string("dataset").empty()) {
    fs::path dir = c.get_string("dataset");
    if (!fs::is_directory(dir)) dir = dir.parent_path();
    const auto cfg_path = dir / kCorpusConfig;
    if (!fs::exists(cfg_path))
      fail(ErrorKind::UsageError, "train: " + dir.string() + " has no " + kCorpusConfig + "; only generated corpora can be trained on");
    const auto corpus_cfg = Config::load(cfg_path);
    for (const auto& key : kCorpusKeys) c.set_value(key, corpus_cfg.get(key));
    c.set_value("corpus_seed", corpus_cfg.get("corpus_seed"));
    c.set_value("n_samples", corpus_cfg.get("n_samples"));
    run.input("corpus_config", cfg_path);
  }
  const auto spec = corpus_spec(c, "corpus_seed");
  const auto corpus = model::generate_synthetic_corpus(spec);

  model::ModelConfig mc;
  mc.vocab_size = corpus.world.vocab->size();
  mc.d_model = c.get_size("d_model");
  mc.n_heads = c.get_size("n_heads");
  mc.n_layers = c.get_size("n_layers");
  mc.d_v = spec.d_v;
  mc.max_len = c.get_size("max_len");
  mc.validate();

  model::TrainConfig tc;
  tc.lr = c.get_float("lr");
  tc.steps = c.get_size("steps");
  tc.batch = c.get_size("batch");
  tc.mlm_mask_prob = c.get_float("mlm_mask_prob");
  tc.itm_pair_prob = c.get_float("itm_pair_prob");
  tc.itm_neg_prob = c.get_float("itm_neg_prob");
  tc.feature_drop_prob = c.get_float("feature_drop_prob");
  tc.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  if (tc.batch == 0) fail(ErrorKind::UsageError, "batch must be at least 1");

  const std::size_t every = std::max<std::size_t>(1, tc.steps / 20);
  auto result = model::train(model::Params<float>::init(mc, static_cast<std::uint64_t>(c.get_int("init_seed"))), corpus,
                             tc, std::nullopt, [&](const model::LossRecord& r) {
                               if ((r.step + 1) % every == 0)
                                 log << "train: step " << r.step + 1 << " mlm " << r.mlm_loss << " itm " << r.itm_loss
                                     << "\n";
                               return true;
                             });
  model::save_checkpoint(run.out / "model.ckpt", {result.params, corpus.world.vocab, result.optimizer});
  model::write_loss_trace(run.out / "loss.csv", result.trace);
  run.output("checkpoint", run.out / "model.ckpt");
  run.output("loss_trace", run.out / "loss.csv");
  log << "train: verb-position loss " << model::mean_target_loss(result.params, *corpus.world.vocab, corpus.samples)
      << " nats (text-only floor " << std::log(static_cast<double>(spec.n_verbs_per_subject)) << ")\n";
}

void cmd_probe(Run& run, const Config& c, std::ostream& log) {
  const auto handle = make_backend(c);
  add_backend_inputs(run, handle);
  add_dataset_inputs(run, c);
  const auto data = load_dataset(c, *handle.vocab);
  const auto pc = probe_config(c);
  probing::ProbeReport report;
  report.metadata = base_metadata("probe", c, handle, data);
  report.metadata["conditions"] = probing::join_conditions(pc.conditions);
  ordered_json sources = ordered_json::object();
  for (const auto& s : data.samples) {
    if (s.pair_label != PairLabel::Positive) continue;
    auto& n = sources[s.target_source];
    n = n.is_null() ? 1 : n.get<std::size_t>() + 1;
  }
  report.metadata["target_sources"] = std::move(sources);
  report.conditions = probing::run_guided_masking(data.samples, *handle.backend, pc, lexicon::Lexicon::builtin());
  const auto files = probing::emit_report(report, run.out, "probe");
  run.output("report", files.json);
  run.output("table", files.text);
  log << probing::render_table(report);
}

void cmd_itm(Run& run, const Config& c, std::ostream& log) {
  const auto handle = make_backend(c);
  add_backend_inputs(run, handle);
  add_dataset_inputs(run, c);
  const auto data = load_dataset(c, *handle.vocab);
  const auto pc = probe_config(c);
  probing::ProbeReport report;
  report.metadata = base_metadata("itm", c, handle, data);
  report.metadata["itm_threshold"] = pc.itm_threshold;
  std::vector<probing::ItmAblation> ablations;
  {
    std::string list = c.get_string("itm_ablation");
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) ablations.push_back(probing::parse_itm_ablation(item));
    if (ablations.empty()) fail(ErrorKind::UsageError, "no ITM ablation selected");
  }
  for (auto a : ablations)
    report.itm.push_back(probing::run_itm(data.samples, *handle.backend, pc, a, lexicon::Lexicon::builtin()));
  const auto files = probing::emit_report(report, run.out, "itm");
  run.output("report", files.json);
  run.output("table", files.text);
  log << probing::render_table(report);
}

void cmd_explain(Run& run, const Config& c, std::ostream& log) {
  const auto handle = make_backend(c);
  add_backend_inputs(run, handle);
  add_dataset_inputs(run, c);
  const auto& id = require(c, "sample");
  const auto data = load_dataset(c, *handle.vocab);
  const ProbeSample* sample = nullptr;
  for (const auto& s : data.samples)
    if (s.id == id) {
      sample = &s;
      break;
    }
  if (!sample) fail(ErrorKind::UsageError, "explain: no sample with id '" + id + "'");

  const auto& target_name = c.get_string("target");
  explain::RelevancyMap map;
  if (target_name == "mlm") {
    const auto target = find_verb_index(sample->caption, sample->target_index, lexicon::Lexicon::builtin().lemmatizer);
    map = explain::relevancy(*handle.backend, sample->image, mask_at(sample->caption, target).words(), target,
                             model::RelevancyTarget::MaskedToken);
  } else if (target_name == "itm") {
    map = explain::relevancy(*handle.backend, sample->image, sample->caption.words, 0, model::RelevancyTarget::ItmMatch);
  } else {
    fail(ErrorKind::UsageError, "explain: target must be mlm or itm");
  }
  std::string stem;
  for (char ch : id) stem += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
  const auto files = explain::render_heatmap(map, sample->image, run.out, stem);
  run.output("heatmap", files.raster);
  run.output("token_scores", files.tokens);
  log << "explain: " << files.raster.string() << ", " << files.tokens.string() << "\n";
}

void cmd_report(Run& run, const std::vector<std::string>& args, std::ostream& log) {
  if (args.empty()) fail(ErrorKind::UsageError, "report: give one or more report files");
  std::vector<probing::ProbeReport> reports;
  for (const auto& a : args) {
    reports.push_back(probing::read_report(a));
    run.input("report", a);
  }
  const auto table = probing::render_comparison(reports);
  write_text(run.out / "comparison.txt", table);
  run.output("comparison", run.out / "comparison.txt");
  log << table;
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UsageError:
      return kExitUsage;
    case ErrorKind::BackendError:
    case ErrorKind::CapabilityError:
      return kExitBackend;
    default:
      return kExitData;
  }
}

std::string error_line(ErrorKind kind, std::string_view message) {
  nlohmann::json line = {{"error", {{"kind", to_string(kind)}, {"exit", exit_code(kind)}, {"message", message}}}};
  return line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"gen", "train", "probe", "itm", "explain", "report"};
  return names;
}

BackendHandle make_backend(const Config& config) {
  const auto& spec = require(config, "backend");
  BackendHandle h;
  if (spec.starts_with("toy:")) {
    const fs::path path = spec.substr(4);
    auto toy = model::ToyBackend::from_checkpoint(path);
    h.vocab = toy->vocab();
    h.backend = std::move(toy);
    h.checkpoint = path;
  } else if (spec.starts_with("remote:")) {
    h.backend = std::make_shared<model::RemoteBackend>(
        model::Endpoint::parse(spec.substr(7)), config.get_size("remote_topk"),
        std::chrono::milliseconds(config.get_int("remote_timeout_ms")));
    h.vocab = std::make_shared<const Vocabulary>();
  } else {
    fail(ErrorKind::UsageError, "backend must be toy:<checkpoint> or remote:<host:port>, got '" + spec + "'");
  }
  return h;
}

LoadedDataset load_dataset(const Config& config, const Vocabulary& vocab) {
  const auto& lemmatizer = lexicon::Lexicon::builtin().lemmatizer;
  const auto& format = config.get_string("format");
  const fs::path file = dataset_file(config);
  std::optional<fs::path> rois;
  if (!config.get_string("rois").empty()) rois = fs::path(config.get_string("rois"));
  if (format == "svo") return load_svo_dataset(file, vocab, lemmatizer, rois);
  if (format == "coco") {
    if (!rois) fail(ErrorKind::UsageError, "coco datasets need 'rois'");
    std::optional<fs::path> activities;
    if (!config.get_string("activities").empty()) activities = fs::path(config.get_string("activities"));
    return load_coco_captions(file, activities, *rois, vocab, lemmatizer);
  }
  fail(ErrorKind::UsageError, "format must be svo or coco, got '" + format + "'");
}

RunManifest run_command(std::string_view command, const Config& config, const std::vector<std::string>& args,
                        std::ostream& log) {
  if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
    fail(ErrorKind::UsageError, "unknown command '" + std::string(command) + "'");
  if (command != "report" && !args.empty())
    fail(ErrorKind::UsageError, std::string(command) + " takes no positional arguments");
  Run run;
  run.manifest.command = std::string(command);
  run.manifest.tool_version = VLPROBE_VERSION;
  run.manifest.config = config;
  run.manifest.args = args;
  run.manifest.seed = config.get_int("seed");
  run.manifest.started_at = utc_now();
  run.out = prepare_out(config);
  if (command == "probe" || command == "itm" || command == "explain")
    run.input("lexicon", lexicon::Lexicon::default_data_dir());

  if (command == "gen") cmd_gen(run, config, log);
  else if (command == "train") cmd_train(run, config, log);
  else if (command == "probe") cmd_probe(run, config, log);
  else if (command == "itm") cmd_itm(run, config, log);
  else if (command == "explain") cmd_explain(run, config, log);
  else cmd_report(run, args, log);

  run.manifest.finished_at = utc_now();
  run.manifest.save(run.out / (std::string(command) + ".manifest.json"));
  return run.manifest;
}

ReplayResult replay(const fs::path& manifest_path, const std::optional<fs::path>& out, std::ostream& log) {
  const auto original = RunManifest::load(manifest_path);
  original.verify_inputs();
  Config config = original.config;
  const fs::path target = out ? *out : manifest_path.parent_path() / "replay";
  config.set_value("out", target.generic_string());
  ReplayResult result;
  result.rerun = run_command(original.command, config, original.args, log);
  for (const auto& before : original.outputs) {
    auto it = std::find_if(result.rerun.outputs.begin(), result.rerun.outputs.end(),
                           [&](const FileDigest& d) { return d.role == before.role; });
    if (it == result.rerun.outputs.end() || it->sha256 != before.sha256) result.differing.push_back(before.role);
  }
  if (result.rerun.outputs.size() != original.outputs.size()) result.differing.push_back("output count");
  result.identical = result.differing.empty();
  return result;
}

}  // namespace vlprobe::cli
