#pragma once

#include <stdexcept>
#include <string>

namespace egr {

// Base of every error raised by the library. Errors derived from InputError
// describe bad caller input (shapes, files, configs); the CLI maps them to
// exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

// Raised for signals whose variance or power is zero.
class DegenerateSignalError : public InputError {
 public:
  using InputError::InputError;
};

class NonFiniteError : public InputError {
 public:
  using InputError::InputError;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

// A numeric self-check (gradient check, acceptance assertion) did not hold.
class CheckFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace egr
