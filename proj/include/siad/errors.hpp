#pragma once

#include <stdexcept>
#include <string>

namespace siad {

/// Failure category; each maps to one CLI exit code.
enum class ErrorKind { Config, Divergence, Numerical };

class SiadError : public std::runtime_error {
public:
    SiadError(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Invalid input: malformed netlist, bad config, grid or Nyquist violation.
class ConfigError : public SiadError {
public:
    explicit ConfigError(const std::string& what) : SiadError(ErrorKind::Config, what) {}
};

/// Netlist syntax error with a source position.
class ParseError : public ConfigError {
public:
    ParseError(int line, int column, const std::string& what)
        : ConfigError("line " + std::to_string(line) + ", column " + std::to_string(column) +
                      ": " + what),
          line_(line), column_(column) {}
    [[nodiscard]] int line() const noexcept { return line_; }
    [[nodiscard]] int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

/// Simulation blow-up; carries the first offending time.
class DivergenceError : public SiadError {
public:
    DivergenceError(double t, const std::string& what)
        : SiadError(ErrorKind::Divergence, what), time_(t) {}
    [[nodiscard]] double time() const noexcept { return time_; }

private:
    double time_;
};

/// Singular or ill-conditioned matrices, non-convergence, division guards.
class NumericalError : public SiadError {
public:
    explicit NumericalError(const std::string& what) : SiadError(ErrorKind::Numerical, what) {}
};

}  // namespace siad
