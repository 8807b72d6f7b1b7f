#pragma once

#include <stdexcept>
#include <string>

namespace unicon {

// Malformed input that could not be parsed at all. Distinct from a
// ValidationReport, which describes well-formed but invalid data.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A pipeline stage was invoked before the stage that produces its input.
struct MissingArtifactError : std::runtime_error {
  explicit MissingArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss, degenerate fit, or any other numeric failure.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidArgument : std::runtime_error {
  explicit InvalidArgument(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace unicon
