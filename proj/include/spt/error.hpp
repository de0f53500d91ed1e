#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spt {

// Model coefficients that violate ellipticity or dimension rules.
class invalid_model : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Initial prices that already sit on the wrong side of a barrier.
class invalid_initial_condition : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class numeric_failure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a path produces a non-finite value; carries where it happened.
class integration_failure : public std::runtime_error {
public:
    integration_failure(std::size_t path, std::size_t step, const std::string& what)
        : std::runtime_error("path " + std::to_string(path) + ", step " + std::to_string(step) + ": " + what),
          path_(path), step_(step) {}

    std::size_t path() const noexcept { return path_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t path_;
    std::size_t step_;
};

} // namespace spt
