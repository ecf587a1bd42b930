#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vlprobe/probing/guided.hpp"
#include "vlprobe/probing/itm.hpp"

namespace vlprobe::probing {

inline constexpr const char* kReportSchema = "vlprobe.report/1";

// Results of one run. Metadata is free-form but must be deterministic for a
// fixed input (no clocks, no host names).
struct ProbeReport {
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
  std::vector<ConditionResult> conditions;
  std::vector<ItmResult> itm;

  std::string backend() const;
};

nlohmann::ordered_json to_json(const ProbeReport& report);
// Throws SchemaError.
ProbeReport report_from_json(const nlohmann::ordered_json& doc);
ProbeReport read_report(const std::filesystem::path& path);

// Condition x accuracy table, plus the ITM average/positive/negative table.
std::string render_table(const ProbeReport& report);
// One row per condition per report, side by side.
std::string render_comparison(std::span<const ProbeReport> reports);

struct ReportFiles {
  std::filesystem::path json;
  std::filesystem::path text;
};

// Writes `<stem>.json` and `<stem>.txt` under `dir`.
ReportFiles emit_report(const ProbeReport& report, const std::filesystem::path& dir, const std::string& stem = "report");

}  // namespace vlprobe::probing
