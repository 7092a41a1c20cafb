#pragma once

#include <stdexcept>
#include <string>

namespace skewprobe {

// Bad configuration or usage: malformed grid, unknown pair, invalid flag
// values, missing threshold entries. The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs that are well-formed as configuration but inconsistent as data:
// corrupt stores, missing embedding rows, empty retrieval pools. Exit code 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace skewprobe
