#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <utility>

namespace bilevel {

/// Bad arguments or malformed configuration.  CLI exit code 1.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An oracle returned a non-finite value or gradient.
struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rank-deficient matrix where full row rank is required.
struct FactorizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Iteration budget exhausted before the stopping certificate held.
/// Carries the best iterate seen and its residual.  CLI exit code 2.
struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, Eigen::VectorXd best, double res)
      : std::runtime_error(what), best_iterate(std::move(best)), residual(res) {}
  Eigen::VectorXd best_iterate;
  double residual;
};

/// Degenerate active set (strict complementarity fails) in a KKT solve.
struct DegeneracyError : std::runtime_error {
  DegeneracyError(const std::string& what, std::string report)
      : std::runtime_error(what), condition_report(std::move(report)) {}
  std::string condition_report;
};

/// Filesystem / parse failures.  CLI exit code 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bilevel
