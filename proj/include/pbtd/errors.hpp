#pragma once

#include <stdexcept>

namespace pbtd {

/// Invalid configuration or input file; maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical fault during inference (non-finite ELBO, invalid Gamma rate);
/// maps to CLI exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pbtd
