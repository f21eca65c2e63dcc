#pragma once

#include <stdexcept>
#include <string>

namespace flguard {

// Invalid configuration or malformed input; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Failure while loading data files; also a configuration-class problem.
class LoadError : public ConfigError {
 public:
  explicit LoadError(const std::string& what) : ConfigError(what) {}
};

}  // namespace flguard
