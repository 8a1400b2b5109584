// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pspec {

/// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  input = 2,            ///< unreadable, malformed or corrupt input data
  parameter = 3,        ///< argument outside its supported range
  instability = 4,      ///< explicit integration diverged
  non_convergence = 5,  ///< iterative solver exhausted its budget
  degenerate = 6,       ///< mathematically undefined request (e.g. kernel element)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct InputError : Error {
  explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& what)
      : Error(ErrorKind::parameter, what) {}
};

struct InstabilityError : Error {
  explicit InstabilityError(const std::string& what)
      : Error(ErrorKind::instability, what) {}
};

struct NonConvergenceError : Error {
  explicit NonConvergenceError(const std::string& what)
      : Error(ErrorKind::non_convergence, what) {}
};

struct DegenerateError : Error {
  explicit DegenerateError(const std::string& what)
      : Error(ErrorKind::degenerate, what) {}
};

}  // namespace pspec
