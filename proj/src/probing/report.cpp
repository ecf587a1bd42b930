#include "vlprobe/probing/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "vlprobe/error.hpp"

namespace vlprobe::probing {

using nlohmann::ordered_json;

namespace {

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::string pct(double v) { return fmt("%.1f", 100.0 * v); }

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out.flush()) fail(ErrorKind::IoError, "write failed for " + path.string());
}

}  // namespace

std::string ProbeReport::backend() const {
  if (auto it = metadata.find("backend"); it != metadata.end() && it->is_string()) return it->get<std::string>();
  return "?";
}

ordered_json to_json(const ProbeReport& report) {
  ordered_json doc;
  doc["schema"] = kReportSchema;
  doc["metadata"] = report.metadata;
  doc["conditions"] = ordered_json::array();
  for (const auto& c : report.conditions) {
    ordered_json hits = ordered_json::object();
    for (const auto& [k, h] : c.hits_at) hits[std::to_string(k)] = h;
    doc["conditions"].push_back({{"condition", c.condition},
                                 {"n_evaluated", c.n_evaluated},
                                 {"n_skipped", c.n_skipped},
                                 {"skipped_no_target", c.skipped_no_target},
                                 {"skipped_backend", c.skipped_backend},
                                 {"top_k_hits", c.top_k_hits},
                                 {"accuracy", c.accuracy},
                                 {"hits_at", std::move(hits)},
                                 {"fallback_subject_count", c.fallback_subject_count}});
  }
  doc["itm"] = ordered_json::array();
  for (const auto& r : report.itm)
    doc["itm"].push_back({{"ablation", r.ablation},
                          {"n_pos", r.n_pos},
                          {"n_neg", r.n_neg},
                          {"correct_pos", r.correct_pos},
                          {"correct_neg", r.correct_neg},
                          {"acc_avg", r.acc_avg},
                          {"acc_pos", r.acc_pos},
                          {"acc_neg", r.acc_neg},
                          {"n_skipped", r.n_skipped},
                          {"fallback_subject_count", r.fallback_subject_count}});
  return doc;
}

ProbeReport report_from_json(const ordered_json& doc) {
  ProbeReport report;
  try {
    if (doc.at("schema").get<std::string>() != kReportSchema)
      fail(ErrorKind::SchemaError, "unsupported report schema " + doc.at("schema").dump());
    report.metadata = doc.at("metadata");
    for (const auto& c : doc.at("conditions")) {
      ConditionResult r;
      r.condition = c.at("condition").get<std::string>();
      r.n_evaluated = c.at("n_evaluated").get<std::size_t>();
      r.n_skipped = c.at("n_skipped").get<std::size_t>();
      r.skipped_no_target = c.value("skipped_no_target", std::size_t{0});
      r.skipped_backend = c.value("skipped_backend", std::size_t{0});
      r.top_k_hits = c.at("top_k_hits").get<std::size_t>();
      r.accuracy = c.at("accuracy").get<double>();
      for (const auto& [k, h] : c.at("hits_at").items()) r.hits_at[std::stoul(k)] = h.get<std::size_t>();
      r.fallback_subject_count = c.at("fallback_subject_count").get<std::size_t>();
      report.conditions.push_back(std::move(r));
    }
    for (const auto& i : doc.at("itm")) {
      ItmResult r;
      r.ablation = i.at("ablation").get<std::string>();
      r.n_pos = i.at("n_pos").get<std::size_t>();
      r.n_neg = i.at("n_neg").get<std::size_t>();
      r.correct_pos = i.at("correct_pos").get<std::size_t>();
      r.correct_neg = i.at("correct_neg").get<std::size_t>();
      r.acc_avg = i.at("acc_avg").get<double>();
      r.acc_pos = i.at("acc_pos").get<double>();
      r.acc_neg = i.at("acc_neg").get<double>();
      r.n_skipped = i.at("n_skipped").get<std::size_t>();
      r.fallback_subject_count = i.at("fallback_subject_count").get<std::size_t>();
      report.itm.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, std::string("malformed report: ") + e.what());
  } catch (const std::logic_error& e) {
    fail(ErrorKind::SchemaError, std::string("malformed report: ") + e.what());
  }
  return report;
}

ProbeReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open report " + path.string());
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, path.string() + ": " + e.what());
  }
  return report_from_json(doc);
}

std::string render_table(const ProbeReport& report) {
  std::ostringstream out;
  out << "backend: " << report.backend() << "\n";
  for (const auto& [key, value] : report.metadata.items())
    if (key != "backend") out << key << ": " << (value.is_string() ? value.get<std::string>() : value.dump()) << "\n";

  if (!report.conditions.empty()) {
    const auto& cutoffs = report.conditions.front().hits_at;
    std::string k = report.metadata.contains("k") ? report.metadata["k"].dump() : "k";
    out << "\n" << fmt("%-18s %9s %8s %9s", "condition", "evaluated", "skipped", ("top-" + k).c_str());
    for (const auto& entry : cutoffs) out << fmt(" %7s", ("@" + std::to_string(entry.first)).c_str());
    out << fmt(" %10s\n", "subj-fallback");
    for (const auto& c : report.conditions) {
      out << fmt("%-18s %9zu %8zu %9s", c.condition.c_str(), c.n_evaluated, c.n_skipped, pct(c.accuracy).c_str());
      for (const auto& [kc, h] : c.hits_at) {
        const double acc = c.n_evaluated ? static_cast<double>(h) / static_cast<double>(c.n_evaluated) : 0.0;
        out << fmt(" %7s", pct(acc).c_str());
      }
      out << fmt(" %13zu\n", c.fallback_subject_count);
    }
  }
  if (!report.itm.empty()) {
    out << "\n" << fmt("%-10s %7s %7s %9s %9s %9s %8s\n", "ablation", "n_pos", "n_neg", "average", "positive",
                       "negative", "skipped");
    for (const auto& r : report.itm)
      out << fmt("%-10s %7zu %7zu %9s %9s %9s %8zu\n", r.ablation.c_str(), r.n_pos, r.n_neg, pct(r.acc_avg).c_str(),
                 pct(r.acc_pos).c_str(), pct(r.acc_neg).c_str(), r.n_skipped);
  }
  out << "\naccuracies in percent\n";
  return out.str();
}

std::string render_comparison(std::span<const ProbeReport> reports) {
  std::size_t width = 7;
  for (const auto& r : reports) width = std::max(width, r.backend().size());
  std::ostringstream out;
  bool any_conditions = false, any_itm = false;
  for (const auto& r : reports) {
    any_conditions |= !r.conditions.empty();
    any_itm |= !r.itm.empty();
  }
  if (any_conditions) {
    out << fmt("%-*s  %-18s %9s %8s %9s\n", static_cast<int>(width), "backend", "condition", "evaluated", "skipped",
               "top-k");
    for (const auto& r : reports)
      for (const auto& c : r.conditions)
        out << fmt("%-*s  %-18s %9zu %8zu %9s\n", static_cast<int>(width), r.backend().c_str(), c.condition.c_str(),
                   c.n_evaluated, c.n_skipped, pct(c.accuracy).c_str());
  }
  if (any_itm) {
    if (any_conditions) out << "\n";
    out << fmt("%-*s  %-10s %9s %9s %9s\n", static_cast<int>(width), "backend", "ablation", "average", "positive",
               "negative");
    for (const auto& r : reports)
      for (const auto& i : r.itm)
        out << fmt("%-*s  %-10s %9s %9s %9s\n", static_cast<int>(width), r.backend().c_str(), i.ablation.c_str(),
                   pct(i.acc_avg).c_str(), pct(i.acc_pos).c_str(), pct(i.acc_neg).c_str());
  }
  return out.str();
}

ReportFiles emit_report(const ProbeReport& report, const std::filesystem::path& dir, const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  ReportFiles files{dir / (stem + ".json"), dir / (stem + ".txt")};
  write_file(files.json, to_json(report).dump(2) + "\n");
  write_file(files.text, render_table(report));
  return files;
}

}  // namespace vlprobe::probing
