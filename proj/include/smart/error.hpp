#pragma once

#include <stdexcept>
#include <string>

namespace smart {

// Every failure the library reports derives from Error. The CLI maps the
// families onto exit codes (config 2, data 3, numeric 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Data-side failures: unreadable datasets, split protocol violations,
// corrupt perception inputs.
class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ProtocolError : public DataError {
 public:
  using DataError::DataError;
};

class VocabularyError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyRegionError : public DataError {
 public:
  EmptyRegionError(const std::string& what, int frame = -1) : DataError(what), frame_(frame) {}
  int frame() const { return frame_; }

 private:
  int frame_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace smart
