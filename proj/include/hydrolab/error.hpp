#ifndef HYDROLAB_ERROR_HPP_
#define HYDROLAB_ERROR_HPP_

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hydrolab {

/// Base of every error raised by the library. kind() is a stable,
/// machine-greppable name used by the CLI and the wire protocol.
class Error : public std::runtime_error {
 public:
  Error(std::string_view kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  std::string_view kind() const noexcept { return kind_; }

 private:
  std::string_view kind_;
};

/// Non-finite or otherwise unusable numeric input.
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& message) : Error("InvalidInput", message) {}
};

/// Position in a text source, 1-based.
struct SourceLocation {
  int line = 0;
  int column = 0;
};

class SyntaxError : public Error {
 public:
  SyntaxError(SourceLocation where, const std::string& message);
  SourceLocation where() const noexcept { return where_; }

 private:
  SourceLocation where_;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message,
                  std::optional<SourceLocation> where = std::nullopt);
  const std::string& field() const noexcept { return field_; }
  std::optional<SourceLocation> where() const noexcept { return where_; }

 private:
  std::string field_;
  std::optional<SourceLocation> where_;
};

#define HYDROLAB_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  };

// Oscillation analysis and ultimate-gain search.
HYDROLAB_DEFINE_ERROR(TooFewCycles)
HYDROLAB_DEFINE_ERROR(FlatSignal)
HYDROLAB_DEFINE_ERROR(NoBracket)
HYDROLAB_DEFINE_ERROR(NoConvergence)
HYDROLAB_DEFINE_ERROR(PureFirstOrderPlant)

// Metrics.
HYDROLAB_DEFINE_ERROR(SegmentTooShort)

// Runtime and I/O.
HYDROLAB_DEFINE_ERROR(ConfigError)
HYDROLAB_DEFINE_ERROR(IoError)
HYDROLAB_DEFINE_ERROR(SessionClosed)

#undef HYDROLAB_DEFINE_ERROR

/// Throws InvalidInput when value is NaN or infinite.
void require_finite(double value, std::string_view what);

}  // namespace hydrolab

#endif  // HYDROLAB_ERROR_HPP_
