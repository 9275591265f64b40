#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace vsdlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Argument outside the mathematical domain of an operation (e.g. t > 1).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Operand sizes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Query at a time where sigma_t = 0, so noise and score cannot be converted.
class SingularTimeError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Non-finite value produced during optimization or a forward pass.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A constructed object would violate its invariants.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_dim(const Vector& v, Eigen::Index dim, const char* what) {
  if (v.size() != dim) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(dim) +
                         ", got " + std::to_string(v.size()));
  }
}

}  // namespace vsdlab
