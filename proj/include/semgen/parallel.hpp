#pragma once

// Exceptions may not escape an OpenMP parallel region (that is std::terminate),
// so data-level loops run through this wrapper: each iteration's error is
// captured and the lowest-index one is rethrown after the join, which keeps
// the surfaced error independent of scheduling and worker count.

#include <cstdint>
#include <exception>
#include <vector>

namespace semgen {

template <typename Fn>
void parallel_indexed(int64_t n, Fn&& fn) {
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        try {
            fn(i);
        } catch (...) {
            errors[static_cast<size_t>(i)] = std::current_exception();
        }
    }
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace semgen
