#include "vlprobe/error.hpp"

namespace vlprobe {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyCaption: return "EmptyCaption";
    case ErrorKind::BadIndex: return "BadIndex";
    case ErrorKind::NoTargetWord: return "NoTargetWord";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::CorruptDataset: return "CorruptDataset";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::TrainingDiverged: return "TrainingDiverged";
    case ErrorKind::BackendError: return "BackendError";
    case ErrorKind::CapabilityError: return "CapabilityError";
    case ErrorKind::UsageError: return "UsageError";
  }
  return "Unknown";
}

}  // namespace vlprobe
