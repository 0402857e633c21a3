#pragma once

#include <stdexcept>
#include <string>

namespace zcp {

// Bad flags, bad config files, impossible metric/backend combinations.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed corpus files, empty pairings, series that cannot be built.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Transport failures, auth rejections, retry exhaustion, malformed payloads.
struct BackendError : std::runtime_error {
  explicit BackendError(const std::string& what) : std::runtime_error(what) {}
};

// The backend cannot perform the requested operation at all (e.g. token
// scores from an output-only API). Never silently degraded to zeros.
struct CapabilityError : BackendError {
  explicit CapabilityError(const std::string& what) : BackendError(what) {}
};

// Structured model output that does not follow the expected labeled sections.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace zcp
