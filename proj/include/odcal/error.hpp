#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace odcal {

// Base of every error the library raises. The CLI maps subclasses onto exit
// codes: validation/config/domain -> 1, numerical and oracle -> 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class RoutingError : public Error {
 public:
  using Error::Error;
};

// Objective evaluation failed; carries the unit-cube point being evaluated.
class OracleError : public Error {
 public:
  OracleError(const std::string& what, std::vector<double> point)
      : Error(what), point_(std::move(point)) {}
  const std::vector<double>& point() const { return point_; }

 private:
  std::vector<double> point_;
};

}  // namespace odcal
