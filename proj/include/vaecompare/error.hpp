#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vaecompare {

// Base of every exception thrown by the library. The subclasses map onto the
// CLI exit codes (config = 1, data = 2, numeric = 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Raised by the comparison engine when a VAE fit fails inside one refit.
class RefitError : public NumericError {
 public:
  RefitError(std::size_t refit, const std::string& what)
      : NumericError("refit " + std::to_string(refit) + ": " + what), refit_(refit) {}

  std::size_t refit() const noexcept { return refit_; }

 private:
  std::size_t refit_;
};

}  // namespace vaecompare
