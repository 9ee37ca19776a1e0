#pragma once

#include <stdexcept>
#include <string>

namespace latentfit {

/// Base of every error thrown by the library. Callers that only want to
/// report failures can catch this; the subclasses exist so that recovery
/// code (clamp-and-retry, skipping a grid point) can be selective.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(int column, double pivot)
      : Error("matrix not positive definite: pivot " + std::to_string(pivot) +
              " at column " + std::to_string(column)),
        column_(column),
        pivot_(pivot) {}
  int column() const { return column_; }
  double pivot() const { return pivot_; }

 private:
  int column_;
  double pivot_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

/// A selected-inverse entry outside the filled pattern was requested.
class MissingCEntry : public Error {
 public:
  using Error::Error;
};

class UnknownColumn : public Error {
 public:
  using Error::Error;
};

class EmptyComponent : public Error {
 public:
  using Error::Error;
};

class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

class MissingHyperparameter : public Error {
 public:
  using Error::Error;
};

class SupportViolation : public Error {
 public:
  using Error::Error;
};

class SizeCapExceeded : public Error {
 public:
  using Error::Error;
};

/// Model-spec parse failures carry the 1-based line number (0 when the
/// problem is not tied to a line, e.g. a missing required section).
class SpecError : public Error {
 public:
  SpecError(std::string kind, int line, const std::string& what)
      : Error(kind + (line > 0 ? " (line " + std::to_string(line) + ")" : std::string{}) +
              ": " + what),
        kind_(std::move(kind)),
        line_(line) {}
  const std::string& kind() const { return kind_; }
  int line() const { return line_; }

 private:
  std::string kind_;
  int line_;
};

class SurvivalDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace latentfit
