#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ceqe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: unknown stemmer, out-of-range parameter, missing asset.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input. `location` is a 1-based line number or a byte offset,
/// depending on the format being parsed.
class ParseError : public Error {
 public:
  ParseError(std::string message, std::uint64_t location)
      : Error(std::move(message)), location_(location) {}

  std::uint64_t location() const noexcept { return location_; }

 private:
  std::uint64_t location_;
};

/// Lookup of an identifier the container has never seen.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Collects non-fatal conditions. Warnings never change an exit code.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
  bool empty() const noexcept { return warnings.empty(); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

}  // namespace ceqe
