#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace isem {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A zero-sized alphabet or otherwise malformed AgentSpec.
class InvalidSpec : public Error {
public:
    using Error::Error;
};

/// An argument outside the domain of an operation (observation index out of
/// range, empty action sequence, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A caller broke an API contract (shape mismatch, illegal primitive action).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Data failed validation (non-positive behavior probability, off-simplex row).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Agents in a dataset and a joint policy do not line up.
class MismatchError : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

/// Malformed text input. Carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A non-finite intermediate inside training, located by episode, agent and
/// decision index.
class NumericError : public Error {
public:
    NumericError(std::size_t episode, std::size_t agent, std::size_t step, const std::string& what)
        : Error("numeric failure at episode " + std::to_string(episode) + ", agent " +
                std::to_string(agent) + ", step " + std::to_string(step) + ": " + what),
          episode_(episode), agent_(agent), step_(step) {}

    std::size_t episode() const noexcept { return episode_; }
    std::size_t agent() const noexcept { return agent_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t episode_;
    std::size_t agent_;
    std::size_t step_;
};

} // namespace isem
