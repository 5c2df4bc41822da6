#pragma once

#include <stdexcept>
#include <string>

namespace semgen {

// Bad config, bad input file, violated precondition. CLI maps this to exit 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Failure while running (divergence, I/O mid-pipeline, internal state). Exit 2.
struct RunError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace semgen
