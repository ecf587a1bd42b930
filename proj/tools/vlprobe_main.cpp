#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vlprobe/cli/commands.hpp"

namespace {

using vlprobe::cli::Config;

struct Overrides {
  std::optional<std::string> config_file;
  std::vector<std::string> sets;
  std::optional<std::string> backend, dataset, conditions, out, sample, target, format, rois;
  std::optional<std::int64_t> k, seed, workers, steps, n_samples;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_file, "key = value config file");
  cmd->add_option("--set", o.sets, "override one config key (key=value), repeatable");
  cmd->add_option("--backend", o.backend, "toy:<checkpoint> or remote:<host:port>");
  cmd->add_option("--dataset", o.dataset, "dataset file or directory");
  cmd->add_option("--format", o.format, "dataset format: svo or coco");
  cmd->add_option("--rois", o.rois, "ROI feature directory");
  cmd->add_option("--k", o.k, "top-k cutoff");
  cmd->add_option("--conditions", o.conditions, "guided,subject_ablation,whole_image,text_only");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--workers", o.workers, "parallel evaluation workers");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--sample", o.sample, "sample id (explain)");
  cmd->add_option("--target", o.target, "explain readout: mlm or itm");
  cmd->add_option("--steps", o.steps, "training steps");
  cmd->add_option("--n-samples", o.n_samples, "synthetic sample count");
}

Config build_config(const Overrides& o) {
  Config c = o.config_file ? Config::load(*o.config_file) : Config();
  for (const auto& s : o.sets) c.assign(s);
  auto put_s = [&](const char* key, const std::optional<std::string>& v) {
    if (v) c.set_value(key, *v);
  };
  auto put_i = [&](const char* key, const std::optional<std::int64_t>& v) {
    if (v) c.set_value(key, *v);
  };
  put_s("backend", o.backend);
  put_s("dataset", o.dataset);
  put_s("format", o.format);
  put_s("rois", o.rois);
  put_s("conditions", o.conditions);
  put_s("out", o.out);
  put_s("sample", o.sample);
  put_s("target", o.target);
  put_i("k", o.k);
  put_i("seed", o.seed);
  put_i("workers", o.workers);
  put_i("steps", o.steps);
  put_i("n_samples", o.n_samples);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided-masking probes for vision-language models", "vlprobe"};
  app.set_version_flag("--version", std::string(VLPROBE_VERSION));
  app.require_subcommand(1);

  Overrides o;
  std::vector<std::string> report_files;
  std::string manifest;
  std::optional<std::string> replay_out;

  add_common(app.add_subcommand("gen", "generate a synthetic grounded corpus"), o);
  add_common(app.add_subcommand("train", "train the toy model"), o);
  add_common(app.add_subcommand("probe", "guided-masking probe"), o);
  add_common(app.add_subcommand("itm", "image-text matching probe"), o);
  add_common(app.add_subcommand("explain", "relevancy heatmap for one sample"), o);
  auto* report = app.add_subcommand("report", "merge probe/itm reports into one table");
  add_common(report, o);
  report->add_option("files", report_files, "report JSON files")->required();
  auto* replay = app.add_subcommand("replay", "rerun a manifest and compare outputs");
  replay->add_option("manifest", manifest, "manifest JSON")->required();
  replay->add_option("--out", replay_out, "output directory for the rerun");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << vlprobe::cli::error_line(vlprobe::ErrorKind::UsageError, e.what()) << "\n";
    return vlprobe::cli::kExitUsage;
  }

  try {
    auto* cmd = app.get_subcommands().front();
    if (cmd == replay) {
      const auto r = vlprobe::cli::replay(manifest, replay_out, std::cout);
      if (!r.identical) {
        std::string roles;
        for (const auto& d : r.differing) roles += (roles.empty() ? "" : ",") + d;
        std::cerr << vlprobe::cli::error_line(vlprobe::ErrorKind::CorruptDataset, "replay differs in: " + roles) << "\n";
        return vlprobe::cli::kExitData;
      }
      std::cout << "replay: outputs identical\n";
      return vlprobe::cli::kExitOk;
    }
    vlprobe::cli::run_command(cmd->get_name(), build_config(o), report_files, std::cout);
    return vlprobe::cli::kExitOk;
  } catch (const vlprobe::Error& e) {
    std::cerr << vlprobe::cli::error_line(e.kind(), e.what()) << "\n";
    return vlprobe::cli::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << vlprobe::cli::error_line(vlprobe::ErrorKind::IoError, e.what()) << "\n";
    return vlprobe::cli::kExitData;
  }
}
