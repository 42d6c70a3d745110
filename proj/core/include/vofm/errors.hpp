#pragma once

#include <stdexcept>
#include <string>

namespace vofm {

// Error categories map onto CLI exit codes: invalid input/config -> 2,
// numeric failure -> 3, I/O and file-format problems -> 4.
enum class ErrorKind {
  invalid_input,
  conditioning,
  numeric,
  io,
  format,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
      case ErrorKind::invalid_input:
      case ErrorKind::conditioning:
        return 2;
      case ErrorKind::numeric:
        return 3;
      case ErrorKind::io:
      case ErrorKind::format:
        return 4;
    }
    return 1;
  }

 private:
  ErrorKind kind_;
};

}  // namespace vofm
