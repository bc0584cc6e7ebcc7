#pragma once

#include <stdexcept>
#include <string>

namespace exitcde {

// Root of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A query outside the valid domain of a path or function.
class DomainError : public Error {
 public:
  DomainError(const std::string& what, double t, double lo, double hi)
      : Error(what), t_(t), lo_(lo), hi_(hi) {}
  double t() const { return t_; }
  double lower() const { return lo_; }
  double upper() const { return hi_; }

 private:
  double t_, lo_, hi_;
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double t) : Error(what), t_(t) {}
  double t() const { return t_; }

 private:
  double t_;
};

// Adaptive step size collapsed below the resolvable floor.
class StiffnessError : public IntegrationError {
 public:
  using IntegrationError::IntegrationError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace exitcde
