#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipld {

// Bad shapes, out-of-range parameters, malformed requests.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Input is well-formed but carries no usable signal (zero variance, zero energy).
class DegenerateSignal : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A non-finite value appeared inside a computation.
class NumericFailure : public std::runtime_error {
public:
    NumericFailure(const std::string& stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(stage) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Training blew up. Carries the per-iteration losses recorded before the abort.
class Diverged : public std::runtime_error {
public:
    Diverged(const std::string& what, std::vector<double> regression, std::vector<double> auxiliary)
        : std::runtime_error(what), regression_(std::move(regression)), auxiliary_(std::move(auxiliary)) {}

    const std::vector<double>& regression_history() const noexcept { return regression_; }
    const std::vector<double>& auxiliary_history() const noexcept { return auxiliary_; }

private:
    std::vector<double> regression_;
    std::vector<double> auxiliary_;
};

}  // namespace ipld
