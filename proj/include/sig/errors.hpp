#pragma once

#include <stdexcept>
#include <string>

namespace sig {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SIG_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

SIG_DEFINE_ERROR(InputError);
SIG_DEFINE_ERROR(RangeError);
SIG_DEFINE_ERROR(ValidationError);
SIG_DEFINE_ERROR(ShapeError);
SIG_DEFINE_ERROR(GradError);
SIG_DEFINE_ERROR(GenError);
SIG_DEFINE_ERROR(DiscError);
SIG_DEFINE_ERROR(ConfigError);
SIG_DEFINE_ERROR(NumericalError);

#undef SIG_DEFINE_ERROR

/// Malformed input line; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace sig
