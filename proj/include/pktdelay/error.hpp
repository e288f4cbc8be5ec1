#pragma once

#include <stdexcept>
#include <string>

namespace pktdelay {

// Malformed or invalid input: bad topology files, inconsistent parameters,
// violated preconditions. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// A computation that could not complete on valid input. Exit code 3.
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pktdelay
