#pragma once

#include <stdexcept>
#include <string>

namespace storm {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration input; `key()` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Well-formed input whose value lies outside the allowed range.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during training.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// An operation called in a state where it is not allowed.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Task specification that cannot be instantiated.
class SpecError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace storm
