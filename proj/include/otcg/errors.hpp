#pragma once

#include <stdexcept>
#include <string>

namespace otcg {

/// Root of every error the library throws. `exit_code()` is the process
/// status the CLI reports for it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class InstanceError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperatorError : public Error {
 public:
  using Error::Error;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// LP failure; the message carries a dump of the offending instance.
class OracleError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

/// NaN/Inf encountered during training.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

class VerificationError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

class FileError : public Error {
 public:
  using Error::Error;
};

}  // namespace otcg
