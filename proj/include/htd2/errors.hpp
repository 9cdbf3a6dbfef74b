#pragma once

#include <stdexcept>
#include <string>

namespace htd2 {

/// Invalid scenario or algorithm parameters.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A position or index outside the valid part of the map.
class DomainError : public std::out_of_range {
public:
    explicit DomainError(const std::string& what) : std::out_of_range(what) {}
};

/// Malformed input file; the message names the offending line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Iterative solver hit its cap before reaching tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// The LP core found the problem infeasible or unbounded.
class LpError : public std::runtime_error {
public:
    explicit LpError(const std::string& what) : std::runtime_error(what) {}
};

/// A module error raised inside the fleet loop, tagged with the step.
class SimulationError : public std::runtime_error {
public:
    SimulationError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace htd2
