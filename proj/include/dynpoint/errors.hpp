#pragma once

#include <stdexcept>
#include <string>

namespace dynpoint {

/// Precondition of an operation was not met (bad dimensions, invalid pose, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A reduction (median, mean, norm factor, metric) had nothing to reduce over.
class EmptyDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative procedure produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace dynpoint
