#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace jointseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// Every tag path through the lattice uses a forbidden transition.
class InfeasibleLatticeError : public Error {
 public:
  using Error::Error;
};

// Exhaustive enumeration refused because the search space is too large.
class GuardError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ModelFormatError : public Error {
 public:
  enum class Kind { kWrongFormat, kVersion, kCorruption, kIo };

  ModelFormatError(Kind kind, const std::string& what)
      : Error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace jointseg
