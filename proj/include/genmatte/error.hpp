#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace genmatte {

enum class ErrorKind {
  kInvalidShape,
  kBounds,
  kShape,
  kConfig,
  kStep,
  kEnsemble,
  kValidation,
  kCapability,
  kTraining,
  kFormat,
  kIo,
  kInternal,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the engine carries a kind so the CLI and the
/// service can map it onto exit codes / HTTP statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace genmatte
