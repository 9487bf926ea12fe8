#pragma once

#include <stdexcept>
#include <string>

namespace morea {

// Failure classes map one-to-one onto the CLI / C API status codes.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class RuntimeFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace morea
