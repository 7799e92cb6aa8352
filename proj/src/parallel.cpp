#include "nonunion/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <exception>
#include <string>

namespace nonunion {

int worker_count() {
    if (const char* env = std::getenv("NONUNION_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<int>(v);
    }
    return omp_get_max_threads();
}

namespace detail {

void parallel_for_impl(std::size_t count, void (*thunk)(void*, std::size_t), void* ctx) {
    // Exceptions cannot cross the OpenMP region; keep the one from the lowest index.
    std::exception_ptr first_error;
    std::size_t first_index = count;
    const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_count())
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            thunk(ctx, static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(nonunion_parallel_error)
            {
                if (static_cast<std::size_t>(i) < first_index) {
                    first_index = static_cast<std::size_t>(i);
                    first_error = std::current_exception();
                }
            }
        }
    }
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail
}  // namespace nonunion
