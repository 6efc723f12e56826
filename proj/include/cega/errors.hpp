#pragma once

#include <stdexcept>
#include <string>

namespace cega {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes, so keep the hierarchy flat.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed graph or matrix shapes.
class StructuralError : public Error {
public:
    using Error::Error;
};

// Invalid configuration values (fractions, budgets, selector names).
class ConfigError : public Error {
public:
    using Error::Error;
};

// A call whose preconditions do not hold (empty mask, k > m, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double residual);
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class TrainingDivergence : public Error {
public:
    TrainingDivergence(int epoch, double loss);
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class BudgetError : public Error {
public:
    using Error::Error;
};

// Dataset or checkpoint parse failure; the message names file and line.
class LoadError : public Error {
public:
    LoadError(const std::string& file, std::size_t line, const std::string& what);
};

}  // namespace cega
