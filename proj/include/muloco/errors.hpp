#pragma once

#include <stdexcept>
#include <string>

namespace muloco {

// Precondition / shape / argument violations.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical failures: overflow, iteration limits, divergence.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid or malformed configuration input.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace muloco
