#pragma once

#include <stdexcept>
#include <string>

namespace fluxcount {

/// Invalid physical parameters (negative times, fidelities outside range, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain of a mathematical mapping.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A least-squares fit could not be carried out or did not converge.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Master-equation integration violated its accuracy guards.
class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration is malformed; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A pipeline stage is missing an upstream output.
class DependencyError : public std::runtime_error {
 public:
  explicit DependencyError(const std::string& missing)
      : std::runtime_error("missing upstream output: " + missing), missing_(missing) {}
  const std::string& missing() const noexcept { return missing_; }

 private:
  std::string missing_;
};

}  // namespace fluxcount
