#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ivregime {

// Dimension mismatches, out-of-range arguments, one-class responses.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every factor of a product-limit estimate was skipped (empty risk sets).
class DegenerateEstimate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Logistic coefficients diverging, or a monotone Cox likelihood.
class SeparationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  // Objective value per iteration, for diagnosing the failure.
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

// A required model is missing from the nuisance set, or options conflict.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OptimizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RowIssue {
  std::size_t row;    // 0-based data row; SIZE_MAX for dataset-level issues
  std::string field;  // empty for whole-row / dataset-level issues
  std::string reason;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<RowIssue> issues);
  const std::vector<RowIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<RowIssue> issues_;
};

}  // namespace ivregime
