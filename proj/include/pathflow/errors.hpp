#pragma once

#include <stdexcept>
#include <string>

namespace pathflow {

/// Bad user-facing configuration (unknown manifold name, invalid counts).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Input left the mathematical domain of an operation (e.g. projection at the
/// origin of the ambient space).
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// A path integrator failed mid-trajectory; carries the offending step.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, int step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    int step() const { return step_; }

private:
    int step_ = -1;
};

/// An iterative solver did not meet its contract (no convergence, drift
/// beyond tolerance). Carries the last residual for diagnostics.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
          residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_ = 0.0;
};

/// Caller violated a documented precondition (e.g. non-orthogonal rotation
/// process passed to the density evaluator).
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

} // namespace pathflow
