#pragma once

#include <stdexcept>
#include <string>

namespace qvar {

/// Raised when a parameter set violates its documented invariants.
class InvalidParameter : public std::invalid_argument {
 public:
  explicit InvalidParameter(const std::string& what) : std::invalid_argument(what) {}
};

/// Argument outside the mathematical domain of a function (e.g. y <= 0 for I1).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Model with constant H (no drift uncertainty and zero market price of risk).
class DegenerateModel : public std::runtime_error {
 public:
  explicit DegenerateModel(const std::string& what) : std::runtime_error(what) {}
};

/// A root could not be bracketed.
class BracketError : public std::runtime_error {
 public:
  explicit BracketError(const std::string& what) : std::runtime_error(what) {}
};

/// Target value lies outside the range of a monotone function.
class RangeError : public std::runtime_error {
 public:
  explicit RangeError(const std::string& what) : std::runtime_error(what) {}
};

/// NaN/Inf in an integrand, a diverging iteration, or a NaN training loss.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qvar
