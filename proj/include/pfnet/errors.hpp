#pragma once

#include <stdexcept>
#include <string>

namespace pfnet {

// Invalid model data or violated modeling assumptions.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failures: singular systems, non-convergent solvers, non-finite state.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pfnet
