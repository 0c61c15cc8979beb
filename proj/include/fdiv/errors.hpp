#pragma once

#include <stdexcept>
#include <string>

namespace fdivergence {

/// Argument outside the admissible set of a function (negative generator
/// input, conjugate argument outside dom(f*), ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Optimal variational value requested for a cell with zero mass; callers
/// fall back to the closed-form divergence with its edge conventions.
class ZeroCellError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// A structural constraint of a model object is violated (noise rates that
/// sum to one, non-stochastic rows, malformed joint tables).
class ConstraintError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The decoupling identities only cover binary, uniform off-diagonal and
/// sparse-pair noise.
class UnsupportedStructure : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EnumerationBoundError : public std::length_error {
 public:
  using std::length_error::length_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fdivergence
