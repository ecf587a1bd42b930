#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vlprobe {

enum class ErrorKind {
  EmptyCaption,
  BadIndex,
  NoTargetWord,
  IoError,
  CorruptDataset,
  SchemaError,
  ShapeError,
  TrainingDiverged,
  BackendError,
  CapabilityError,
  UsageError,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so the CLI can map it
// onto an exit code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace vlprobe
