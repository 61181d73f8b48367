#pragma once

#include <stdexcept>
#include <string>

namespace tsvnet {

// Invalid user input: bad layout, out-of-range geometry, malformed files.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numerical failure inside a solver (singular block, non-convergence, ...).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
    inline void require(bool cond, const std::string& what) {
        if (!cond) throw ValidationError(what);
    }
}

} // namespace tsvnet
