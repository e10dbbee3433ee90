#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ubr {

/// Broad failure category; the CLI maps these to exit codes.
enum class ErrorKind { usage, data, divergence };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when tensor extents disagree. `axis()` names the offending axis
/// (e.g. "channel", "height", "inner").
class ShapeError : public Error {
 public:
  ShapeError(std::string axis, const std::string& what)
      : Error(ErrorKind::usage, what), axis_(std::move(axis)) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t iteration, const std::string& what)
      : Error(ErrorKind::divergence, what), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

inline Error usage_error(const std::string& what) { return Error(ErrorKind::usage, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }

}  // namespace ubr
