#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace avseg {

// Error taxonomy. Validation-style errors (bad config, bad input data, bad
// argument values) map to CLI exit code 1; runtime failures (shape contract
// violations, non-finite numerics) map to exit code 2.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("E_CONFIG", m) {}
};

struct DataError : Error {
  explicit DataError(const std::string& m) : Error("E_DATA", m) {}
};

struct ValueError : Error {
  explicit ValueError(const std::string& m) : Error("E_VALUE", m) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("E_SHAPE", m) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error("E_NUMERIC", m) {}
};

}  // namespace avseg
