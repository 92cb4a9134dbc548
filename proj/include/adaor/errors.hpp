#pragma once

#include <stdexcept>
#include <string>

namespace adaor {

/// Tensor or vector shapes do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (t <= 0, alpha > 1, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller broke a documented precondition (e.g. passing NULL to an edit transform).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A loss, gradient or state became NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_string(const auto& shape) {
  std::string s = "[";
  bool first = true;
  for (auto d : shape) {
    if (!first) s += ", ";
    s += std::to_string(d);
    first = false;
  }
  return s + "]";
}

}  // namespace adaor
