#pragma once

#include <stdexcept>
#include <string>

namespace rehit {

// Error categories map onto CLI exit codes: config=2, numeric=3,
// checkpoint=4, data=5. Everything else exits 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& msg, int line = 0, int col = 0)
      : Error(line > 0 ? msg + " (line " + std::to_string(line) + ", col " + std::to_string(col) + ")"
                       : msg),
        line_(line),
        col_(col) {}
  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_ = 0;
  int col_ = 0;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace rehit
