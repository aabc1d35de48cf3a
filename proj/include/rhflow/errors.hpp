#ifndef RHFLOW_ERRORS_HPP
#define RHFLOW_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rhflow {

/// A numerical failure: non-positive metric coefficient, NaN, divergence.
/// Carries the flow/solver time at which it was detected.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, double time)
      : std::runtime_error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// An operation was asked to run outside its hypotheses (e.g. a curvature
/// assumption does not hold). Reports turn this into a refusal.
class PreconditionViolated : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Configuration parse or validation failure. Line is 0 when not tied to a
/// particular line of the input.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace rhflow

#endif  // RHFLOW_ERRORS_HPP
