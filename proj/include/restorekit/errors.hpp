#pragma once

#include <stdexcept>
#include <string>

namespace restorekit {

/// Malformed or unsupported file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument outside the domain of an operation (bad sigma, degenerate size, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File system failure, message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameter fitting produced a non-finite objective.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Diffusion schedule inconsistent with the requested step.
class ScheduleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace restorekit
