#pragma once

#include <stdexcept>
#include <string>

namespace ltmlc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented invariant (bad vocabulary, shape mismatch, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be decoded.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration. `pointer()` is a JSON pointer to the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string pointer, const std::string& message)
      : Error(message), pointer_(std::move(pointer)) {}

  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace ltmlc
