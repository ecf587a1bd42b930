#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "json.hpp"
#include "vlprobe/cli/commands.hpp"
#include "vlprobe/cli/config.hpp"
#include "vlprobe/cli/manifest.hpp"
#include "vlprobe/error.hpp"
#include "vlprobe/probing/report.hpp"

using namespace vlprobe;
using namespace vlprobe::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("vlprobe-cli-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return ErrorKind::SchemaError;
}

Config smoke_config(const fs::path& out) {
  Config c;
  c.set("backend", std::string("toy:") + VLPROBE_SMOKE_DIR "/model.ckpt");
  c.set("dataset", VLPROBE_SMOKE_DIR);
  c.set("out", out.string());
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Config, DefaultsAndTypes) {
  Config c;
  EXPECT_EQ(c.get_size("k"), 5u);
  EXPECT_EQ(c.get_float("itm_threshold"), 0.5);
  EXPECT_TRUE(c.get_bool("negatives"));
  EXPECT_TRUE(c.is_default("k"));
  c.set("k", "10");
  EXPECT_FALSE(c.is_default("k"));
  EXPECT_EQ(c.get_int("k"), 10);
  EXPECT_EQ(kind_of([&] { c.set("k", "ten"); }), ErrorKind::UsageError);
  EXPECT_EQ(kind_of([&] { c.set("nope", "1"); }), ErrorKind::UsageError);
  EXPECT_EQ(kind_of([&] { c.get_string("k"); }), ErrorKind::UsageError);
  EXPECT_EQ(kind_of([&] { c.assign("k"); }), ErrorKind::UsageError);
  c.set("k", "-1");
  EXPECT_EQ(kind_of([&] { c.get_size("k"); }), ErrorKind::UsageError);
}

TEST(Config, ParseTextAndRoundTrip) {
  const auto c = Config::parse(
      "# probe settings\n"
      "k = 3\n"
      "conditions = guided,text_only\n"
      "backend = \"toy:a b.ckpt\"\n"
      "negatives = false\n"
      "k = 4\n");
  EXPECT_EQ(c.get_int("k"), 4);
  EXPECT_EQ(c.get_string("conditions"), "guided,text_only");
  EXPECT_EQ(c.get_string("backend"), "toy:a b.ckpt");
  EXPECT_FALSE(c.get_bool("negatives"));
  EXPECT_EQ(Config::parse(c.to_text()), c);
  EXPECT_EQ(Config::from_json(c.to_json()), c);
  EXPECT_EQ(kind_of([] { Config::parse("k 3\n"); }), ErrorKind::UsageError);
}

TEST(Manifest, Digests) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto dir = scratch("digest");
  std::ofstream(dir / "f.txt") << "abc";
  EXPECT_EQ(sha256_file(dir / "f.txt"), sha256_hex("abc"));
  fs::create_directories(dir / "d");
  std::ofstream(dir / "d" / "b") << "2";
  std::ofstream(dir / "d" / "a") << "1";
  const auto before = sha256_path(dir / "d");
  std::ofstream(dir / "d" / "a") << "x";
  EXPECT_NE(sha256_path(dir / "d"), before);
  EXPECT_EQ(kind_of([&] { sha256_file(dir / "missing"); }), ErrorKind::IoError);
  fs::remove_all(dir);
}

TEST(Manifest, RoundTripAndVerify) {
  const auto dir = scratch("manifest");
  std::ofstream(dir / "in.txt") << "data";
  RunManifest m;
  m.command = "probe";
  m.tool_version = "t";
  m.seed = 3;
  m.args = {"x"};
  m.inputs.push_back(digest("dataset", dir / "in.txt"));
  m.started_at = utc_now();
  m.finished_at = m.started_at;
  m.save(dir / "m.json");
  const auto back = RunManifest::load(dir / "m.json");
  EXPECT_EQ(back.to_json().dump(), m.to_json().dump());
  EXPECT_NO_THROW(back.verify_inputs());
  std::ofstream(dir / "in.txt") << "tampered";
  EXPECT_EQ(kind_of([&] { back.verify_inputs(); }), ErrorKind::CorruptDataset);
  fs::remove(dir / "in.txt");
  EXPECT_EQ(kind_of([&] { back.verify_inputs(); }), ErrorKind::IoError);
  fs::remove_all(dir);
}

TEST(Commands, ExitCodesAndErrorLine) {
  EXPECT_EQ(exit_code(ErrorKind::UsageError), 2);
  EXPECT_EQ(exit_code(ErrorKind::BackendError), 4);
  EXPECT_EQ(exit_code(ErrorKind::CapabilityError), 4);
  for (auto k : {ErrorKind::EmptyCaption, ErrorKind::BadIndex, ErrorKind::NoTargetWord, ErrorKind::IoError,
                 ErrorKind::CorruptDataset, ErrorKind::SchemaError, ErrorKind::ShapeError, ErrorKind::TrainingDiverged})
    EXPECT_EQ(exit_code(k), 3);
  const auto line = nlohmann::json::parse(error_line(ErrorKind::IoError, "cannot open \"x\"\n"));
  EXPECT_EQ(line["error"]["exit"], 3);
  EXPECT_EQ(line["error"]["kind"], "IoError");
  EXPECT_EQ(line["error"]["message"], "cannot open \"x\"\n");
  EXPECT_EQ(error_line(ErrorKind::UsageError, "m").find('\n'), std::string::npos);
}

TEST(Commands, UsageErrors) {
  const auto dir = scratch("usage");
  std::ostringstream log;
  Config c = smoke_config(dir);
  EXPECT_EQ(kind_of([&] { run_command("frobnicate", c, {}, log); }), ErrorKind::UsageError);
  EXPECT_EQ(kind_of([&] { run_command("probe", c, {"extra"}, log); }), ErrorKind::UsageError);
  c.set("backend", "gpu:0");
  EXPECT_EQ(kind_of([&] { run_command("probe", c, {}, log); }), ErrorKind::UsageError);
  c = smoke_config(dir);
  c.set("k", "0");
  EXPECT_EQ(kind_of([&] { run_command("probe", c, {}, log); }), ErrorKind::UsageError);
  c = smoke_config(dir);
  c.set("backend", "toy:/nonexistent.ckpt");
  EXPECT_EQ(kind_of([&] { run_command("probe", c, {}, log); }), ErrorKind::IoError);
  fs::remove_all(dir);
}

TEST(Commands, SmokeProbeItmReportReplay) {
  const auto dir = scratch("smoke");
  std::ostringstream log;
  const auto probe = run_command("probe", smoke_config(dir / "probe"), {}, log);
  const auto report = probing::read_report(dir / "probe" / "probe.json");
  ASSERT_EQ(report.conditions.size(), 4u);
  for (const auto& c : report.conditions) {
    EXPECT_EQ(c.n_evaluated, 10u) << c.condition;
    EXPECT_EQ(c.n_skipped, 0u);
  }
  EXPECT_EQ(report.metadata["n_samples"], 20);
  EXPECT_FALSE(report.metadata.contains("workers"));
  EXPECT_TRUE(fs::exists(dir / "probe" / "probe.manifest.json"));

  run_command("itm", smoke_config(dir / "itm"), {}, log);
  const auto itm = probing::read_report(dir / "itm" / "itm.json");
  ASSERT_EQ(itm.itm.size(), 3u);
  EXPECT_EQ(itm.itm[0].n_pos, 10u);
  EXPECT_EQ(itm.itm[0].n_neg, 10u);

  Config rc = smoke_config(dir / "report");
  const std::string p = (dir / "probe" / "probe.json").string();
  run_command("report", rc, {p, p}, log);
  const auto table = slurp(dir / "report" / "comparison.txt");
  std::size_t rows = 0;
  for (std::size_t i = 0; (i = table.find("toy:", i)) != std::string::npos; ++i) ++rows;
  EXPECT_EQ(rows, 8u);

  const auto r = replay(dir / "probe" / "probe.manifest.json", std::nullopt, log);
  EXPECT_TRUE(r.identical);
  EXPECT_EQ(slurp(dir / "probe" / "replay" / "probe.json"), slurp(dir / "probe" / "probe.json"));
  (void)probe;
  fs::remove_all(dir);
}

TEST(Commands, ExplainWritesHeatmap) {
  const auto dir = scratch("explain");
  std::ifstream tsv(VLPROBE_SMOKE_DIR "/dataset.tsv");
  std::string header, row;
  std::getline(tsv, header);
  std::getline(tsv, row);
  const std::string image_id = row.substr(0, row.find('\t'));
  std::ostringstream log;
  Config c = smoke_config(dir);
  c.set("sample", image_id + "#2");
  const auto m = run_command("explain", c, {}, log);
  ASSERT_EQ(m.outputs.size(), 2u);
  for (const auto& o : m.outputs) EXPECT_TRUE(fs::exists(o.path)) << o.path;
  c.set("sample", "no-such-id");
  EXPECT_EQ(kind_of([&] { run_command("explain", c, {}, log); }), ErrorKind::UsageError);
  fs::remove_all(dir);
}
