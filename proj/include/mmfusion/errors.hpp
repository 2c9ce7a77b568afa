#pragma once

#include <stdexcept>
#include <string>

namespace mmfusion {

// Shape/precondition misuse by calling code.
class ContractError : public std::runtime_error {
  public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerically degenerate input (zero-norm vector, fully masked row, ...).
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss during training; carries epoch/batch in the message.
class DivergenceError : public std::runtime_error {
  public:
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration input (unknown key, unparsable value).
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / parse failures on artifact files.
class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mmfusion
