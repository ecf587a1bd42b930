#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vlprobe/cli/config.hpp"

namespace vlprobe::cli {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
// Files are hashed individually and then combined in sorted relative-path
// order, so the digest of a directory does not depend on readdir order.
std::string sha256_path(const std::filesystem::path& path);

struct FileDigest {
  std::string role;
  std::string path;
  std::string sha256;
  bool operator==(const FileDigest&) const = default;
};

FileDigest digest(std::string role, const std::filesystem::path& path);

inline constexpr const char* kManifestSchema = "vlprobe.manifest/1";

struct RunManifest {
  std::string command;
  std::string tool_version;
  Config config;
  std::vector<std::string> args;  // positional arguments
  std::int64_t seed = 0;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::string started_at;   // UTC, ISO 8601
  std::string finished_at;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::ordered_json& doc);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);

  // Recomputes every input digest. Throws CorruptDataset on a mismatch and
  // IoError when an input has gone missing.
  void verify_inputs() const;
};

std::string utc_now();

}  // namespace vlprobe::cli
