#pragma once

#include <stdexcept>
#include <string>

namespace hsfusion {

// Shapes or arguments that violate an operation's preconditions.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid algorithm or experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numerical routine could not produce a result meeting its contract.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double residual = -1.0)
        : std::runtime_error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// Sylvester operator a*X + X*b is singular on a component where c is nonzero.
class SolvabilityError : public SolverError {
public:
    SolvabilityError(const std::string& what, double min_eigen_sum)
        : SolverError(what), min_eigen_sum_(min_eigen_sum) {}

    double min_eigen_sum() const noexcept { return min_eigen_sum_; }

private:
    double min_eigen_sum_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hsfusion
