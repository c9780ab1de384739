#include "hydrolab/error.hpp"

#include <cmath>

namespace hydrolab {

namespace {

std::string located(SourceLocation where, const std::string& message) {
  return std::to_string(where.line) + ":" + std::to_string(where.column) + ": " + message;
}

}  // namespace

SyntaxError::SyntaxError(SourceLocation where, const std::string& message)
    : Error("SyntaxError", located(where, message)), where_(where) {}

ValidationError::ValidationError(std::string field, const std::string& message,
                                 std::optional<SourceLocation> where)
    : Error("ValidationError",
            where ? located(*where, field + ": " + message) : field + ": " + message),
      field_(std::move(field)),
      where_(where) {}

void require_finite(double value, std::string_view what) {
  if (!std::isfinite(value)) {
    throw InvalidInput(std::string(what) + " must be finite");
  }
}

}  // namespace hydrolab
