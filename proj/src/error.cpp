#include "genmatte/error.hpp"

namespace genmatte {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidShape: return "invalid-shape";
    case ErrorKind::kBounds: return "bounds";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kStep: return "step";
    case ErrorKind::kEnsemble: return "ensemble";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kCapability: return "capability";
    case ErrorKind::kTraining: return "training";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kInternal: return "internal";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace genmatte
