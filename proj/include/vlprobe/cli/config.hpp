#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace vlprobe::cli {

enum class ValueType { Int, Float, Bool, String };

using Value = std::variant<std::int64_t, double, bool, std::string>;

struct KeySpec {
  std::string name;
  ValueType type;
  Value default_value;
  std::string help;
};

// Every key the CLI understands, in snapshot order.
const std::vector<KeySpec>& config_schema();

// Flat typed key/value configuration:
//
//   # comment
//   k = 5
//   conditions = guided,text_only
//   backend = "toy:model.ckpt"
//
// Unknown keys and values that do not parse as the key's declared type raise
// UsageError. Later assignments override earlier ones.
class Config {
 public:
  Config();  // all defaults

  static Config parse(std::string_view text, std::string_view origin = "<config>");
  static Config load(const std::filesystem::path& path);

  // Parses `value` according to the key's type.
  void set(std::string_view key, std::string_view value);
  void set_value(std::string_view key, Value value);
  // Applies "key=value".
  void assign(std::string_view assignment);

  std::int64_t get_int(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;  // UsageError when negative
  double get_float(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  const std::string& get_string(std::string_view key) const;
  const Value& get(std::string_view key) const;
  bool is_default(std::string_view key) const;

  std::string to_text() const;
  nlohmann::ordered_json to_json() const;
  static Config from_json(const nlohmann::ordered_json& doc);

  bool operator==(const Config&) const = default;

 private:
  const Value& at(std::string_view key, ValueType type) const;
  std::map<std::string, Value, std::less<>> values_;
};

std::string format_value(const Value& v);

}  // namespace vlprobe::cli
