#pragma once

#include <stdexcept>
#include <string>

namespace sbm {

// Exit codes used by the command-line front end.
enum class ExitCode : int {
  kSuccess = 0,
  kConfig = 2,
  kGuard = 3,
  kNumerical = 4,
};

// Invalid parameters, malformed inputs, infeasible starts.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// A hard size guard (permutation search, state enumeration, iteration cap).
class GuardExceeded : public std::runtime_error {
 public:
  explicit GuardExceeded(const std::string& what) : std::runtime_error(what) {}
};

// Iterative numerics that failed to converge or lost consistency.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sbm
