#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emocolor {

/// Broad failure classes. The CLI maps these onto its machine-readable error
/// JSON, the experiment service onto HTTP status codes.
enum class ErrorKind {
  kInvalidArgument,
  kNotFound,
  kIo,
  kFormat,
  kNumerical,
  kDegenerate,
  kConflict,
  kUnsupported,
};

std::string_view to_string(ErrorKind kind);

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

}  // namespace emocolor
