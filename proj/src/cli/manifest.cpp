#include "vlprobe/cli/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>

#include "vlprobe/error.hpp"

namespace vlprobe::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
      fail(ErrorKind::IoError, "sha256: digest initialisation failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) fail(ErrorKind::IoError, "sha256: update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) fail(ErrorKind::IoError, "sha256: finalisation failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::vector<FileDigest> digests_from(const ordered_json& arr) {
  std::vector<FileDigest> out;
  for (const auto& d : arr)
    out.push_back({d.at("role").get<std::string>(), d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
  return out;
}

ordered_json digests_to(const std::vector<FileDigest>& ds) {
  ordered_json arr = ordered_json::array();
  for (const auto& d : ds) arr.push_back({{"role", d.role}, {"path", d.path}, {"sha256", d.sha256}});
  return arr;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  if (in.bad()) fail(ErrorKind::IoError, "read failed for " + path.string());
  return h.hex();
}

std::string sha256_path(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_directory(path, ec)) return sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(path))
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), path));
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& rel : files) {
    const std::string line = rel.generic_string() + '\0' + sha256_file(path / rel) + '\n';
    h.update(line.data(), line.size());
  }
  return h.hex();
}

FileDigest digest(std::string role, const fs::path& path) {
  return {std::move(role), path.generic_string(), sha256_path(path)};
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json RunManifest::to_json() const {
  return {{"schema", kManifestSchema},
          {"command", command},
          {"tool_version", tool_version},
          {"args", args},
          {"seed", seed},
          {"config", config.to_json()},
          {"inputs", digests_to(inputs)},
          {"outputs", digests_to(outputs)},
          {"started_at", started_at},
          {"finished_at", finished_at}};
}

RunManifest RunManifest::from_json(const ordered_json& doc) {
  RunManifest m;
  try {
    if (doc.at("schema").get<std::string>() != kManifestSchema)
      fail(ErrorKind::SchemaError, "unsupported manifest schema " + doc.at("schema").dump());
    m.command = doc.at("command").get<std::string>();
    m.tool_version = doc.at("tool_version").get<std::string>();
    m.args = doc.at("args").get<std::vector<std::string>>();
    m.seed = doc.at("seed").get<std::int64_t>();
    m.config = Config::from_json(doc.at("config"));
    m.inputs = digests_from(doc.at("inputs"));
    m.outputs = digests_from(doc.at("outputs"));
    m.started_at = doc.value("started_at", "");
    m.finished_at = doc.value("finished_at", "");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void RunManifest::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << to_json().dump(2) << "\n";
  if (!out.flush()) fail(ErrorKind::IoError, "write failed for " + path.string());
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open manifest " + path.string());
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, path.string() + ": " + e.what());
  }
  return from_json(doc);
}

void RunManifest::verify_inputs() const {
  for (const auto& d : inputs) {
    const auto now = sha256_path(d.path);
    if (now != d.sha256)
      fail(ErrorKind::CorruptDataset, "input " + d.role + " (" + d.path + ") changed since the run: digest " + now +
                                          ", manifest " + d.sha256);
  }
}

}  // namespace vlprobe::cli
