#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gms {

// Invalid user-supplied configuration (distribution parameters, run configs,
// family/space combinations).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Points, grids or matrices whose shapes do not match.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Kernel called with a tuple of the wrong length, or a kernel index outside 1..4.
class ArityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation not available for a metric space (e.g. midpoint on matrices).
class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Model evaluated outside its domain (plume at x <= 0, K <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// The total-variance denominator of an index is (numerically) zero.
class DegenerateVarianceError : public std::runtime_error {
 public:
  DegenerateVarianceError()
      : std::runtime_error("degenerate variance: output is (nearly) T-constant") {}
  explicit DegenerateVarianceError(const std::string& what) : std::runtime_error(what) {}
};

// Exhaustive enumeration would exceed the configured tuple/operation cap.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The black-box evaluator threw on a sampled input row.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(std::size_t row, const std::string& cause)
      : std::runtime_error("evaluator failed on row " + std::to_string(row) + ": " + cause),
        row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace gms
