#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace indiff {

/// Scenario rejected because one of the standing market assumptions fails.
/// `assumption()` is the short tag ("A1".."A4") so callers can map it to an
/// exit code or a user message without parsing text.
class ScenarioError : public std::invalid_argument {
 public:
  ScenarioError(std::string assumption, const std::string& detail)
      : std::invalid_argument("Assumption (" + assumption + ") violated: " + detail),
        assumption_(std::move(assumption)) {}

  const std::string& assumption() const noexcept { return assumption_; }

 private:
  std::string assumption_;
};

/// Array shapes that do not line up (grid/path/dimension mismatches).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Least-squares design that cannot be solved even after column dropping.
class RegressionError : public std::runtime_error {
 public:
  RegressionError(const std::string& what, std::vector<std::size_t> columns)
      : std::runtime_error(what), columns_(std::move(columns)) {}

  const std::vector<std::size_t>& offending_columns() const noexcept { return columns_; }

 private:
  std::vector<std::size_t> columns_;
};

/// One Picard sweep of a fixed-point scheme.
struct IterationRecord {
  std::size_t block = 0;
  std::size_t iteration = 0;
  double norm_diff = 0.0;
  double ratio = 0.0;  // norm_diff / previous norm_diff, 0 on the first sweep
  double vanish_residual = 0.0;
};

/// A fixed-point iteration stopped contracting or produced non-finite values.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<IterationRecord> history)
      : std::runtime_error(what), history_(std::move(history)) {}

  const std::vector<IterationRecord>& history() const noexcept { return history_; }

 private:
  std::vector<IterationRecord> history_;
};

}  // namespace indiff
