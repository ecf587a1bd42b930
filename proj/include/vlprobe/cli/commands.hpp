#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vlprobe/cli/config.hpp"
#include "vlprobe/cli/manifest.hpp"
#include "vlprobe/core/dataset.hpp"
#include "vlprobe/error.hpp"
#include "vlprobe/model/backend.hpp"

namespace vlprobe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitBackend = 4;

int exit_code(ErrorKind kind);
// One-line JSON object: {"error":{"exit":...,"kind":...,"message":...}}
std::string error_line(ErrorKind kind, std::string_view message);

const std::vector<std::string>& command_names();

struct BackendHandle {
  std::shared_ptr<const model::ModelBackend> backend;
  std::shared_ptr<const Vocabulary> vocab;  // tokenizer vocabulary for datasets
  std::optional<std::filesystem::path> checkpoint;
};

// "toy:<checkpoint>" or "remote:<host:port>". Throws UsageError.
BackendHandle make_backend(const Config& config);

// Loads the dataset named by the config (svo or coco format).
LoadedDataset load_dataset(const Config& config, const Vocabulary& vocab);

// Runs one subcommand (gen, train, probe, itm, explain, report), writes its
// outputs and `<out>/<command>.manifest.json`, and returns the manifest.
RunManifest run_command(std::string_view command, const Config& config, const std::vector<std::string>& args,
                        std::ostream& log);

struct ReplayResult {
  bool identical = false;
  std::vector<std::string> differing;  // output roles whose digest changed
  RunManifest rerun;
};

// Verifies the recorded inputs, reruns the command into `out` (default:
// `<manifest dir>/replay`) and compares output digests role by role.
ReplayResult replay(const std::filesystem::path& manifest_path, const std::optional<std::filesystem::path>& out,
                    std::ostream& log);

}  // namespace vlprobe::cli
