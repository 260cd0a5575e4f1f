#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace capinv {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised on any width/shape disagreement between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid geometry or configuration values.
struct ConfigError : Error {
    using Error::Error;
};

// Snapped plate rows collapse or hit the walls.
struct ResolutionError : ConfigError {
    using ConfigError::ConfigError;
};

// An iterative method ran out of iterations. Carries the last residual.
struct ConvergenceError : Error {
    ConvergenceError(const std::string& what, double residual, std::size_t iterations)
        : Error(what), last_residual(residual), iterations(iterations) {}
    double last_residual;
    std::size_t iterations;
};

// A loss or gradient became NaN/inf during training.
struct NonFiniteError : Error {
    NonFiniteError(const std::string& what, std::size_t iteration)
        : Error(what), iteration(iteration) {}
    std::size_t iteration;
};

// Malformed model/dataset/regression files.
struct FormatError : Error {
    using Error::Error;
};

inline void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace capinv
