#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ntopo {

/// Bad shapes, out-of-range parameters, malformed input.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// An elementwise operation left its mathematical domain (log of a
/// non-positive value, division by zero, ...). Carries the tape node id the
/// result would have received.
class NumericDomainError : public std::domain_error {
public:
  NumericDomainError(const std::string &what, std::size_t node)
      : std::domain_error(what + " (node " + std::to_string(node) + ")"),
        node_(node) {}
  std::size_t node() const noexcept { return node_; }

private:
  std::size_t node_;
};

/// Factorization of the reduced stiffness failed (singular or indefinite).
class SolverFailure : public std::runtime_error {
public:
  SolverFailure(const std::string &what, double smallest_pivot)
      : std::runtime_error(what + " (smallest pivot " +
                           std::to_string(smallest_pivot) + ")"),
        smallest_pivot_(smallest_pivot) {}
  double smallest_pivot() const noexcept { return smallest_pivot_; }

private:
  double smallest_pivot_;
};

/// Raised by the optimizer when a gradient contains NaN or Inf.
class NonFiniteGradient : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace ntopo
