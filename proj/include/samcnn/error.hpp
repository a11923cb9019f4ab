#pragma once

#include <stdexcept>
#include <string>

namespace samcnn {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameter or configuration value. `field()` names the offending key.
class ConfigError : public Error {
public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

/// Raised when the loss or weights become non-finite during training.
class DivergenceError : public Error {
public:
  using Error::Error;
};

/// The signal/noise basis is (numerically) linearly dependent.
class DegenerateBasisError : public Error {
public:
  using Error::Error;
};

} // namespace samcnn
