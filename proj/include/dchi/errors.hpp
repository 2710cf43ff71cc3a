#pragma once

#include <stdexcept>
#include <string>

namespace dchi {

// Product dimensions of a Kronecker or stacked construction exceed the configured cap.
class DimensionOverflow : public std::length_error {
 public:
  using std::length_error::length_error;
};

// An iterative kernel ran out of iterations. Carries the best estimate it had.
class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, double best_estimate)
      : std::runtime_error(what), best_estimate_(best_estimate) {}
  double best_estimate() const noexcept { return best_estimate_; }

 private:
  double best_estimate_;
};

// A fixed-point recursion was asked to run on an unstable operator (rho >= 1).
class Divergence : public std::runtime_error {
 public:
  Divergence(const std::string& what, double rho)
      : std::runtime_error(what), rho_(rho) {}
  double rho() const noexcept { return rho_; }

 private:
  double rho_;
};

class FactorizationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InstanceTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The SCC coverage test presumes a structurally full-rank system matrix.
class LemmaInapplicable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The norm-based covariance bound needs ||Abar||_2 < 1.
class BoundInapplicable : public std::runtime_error {
 public:
  BoundInapplicable(const std::string& what, double b)
      : std::runtime_error(what), b_(b) {}
  double b() const noexcept { return b_; }

 private:
  double b_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dchi
