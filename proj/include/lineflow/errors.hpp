#ifndef LINEFLOW_ERRORS_HPP
#define LINEFLOW_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lineflow {

/// Scenario/configuration input rejected (bad key, bad range, bad file).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative or direct solver failed to reach the requested tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual=" + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_ = 0.0;
};

/// The requested analysis only exists for stable configurations.
class InstabilityError : public std::domain_error {
 public:
  explicit InstabilityError(const std::string& what) : std::domain_error(what) {}
};

}  // namespace lineflow

#endif  // LINEFLOW_ERRORS_HPP
