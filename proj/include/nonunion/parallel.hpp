#pragma once

#include <cstddef>
#include <cstdint>

namespace nonunion {

/// Selects the serial reference loop or the OpenMP loop. Both produce identical
/// results: every task writes only to its own output slot.
enum class Execution { Serial, Parallel };

/// Worker cap: NONUNION_THREADS when set to a positive integer, else the OpenMP default.
int worker_count();

namespace detail {
void parallel_for_impl(std::size_t count, void (*thunk)(void*, std::size_t), void* ctx);
}

template <typename Fn>
void for_each_index(std::size_t count, Execution exec, Fn&& fn) {
    if (exec == Execution::Serial || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    detail::parallel_for_impl(
        count, [](void* ctx, std::size_t i) { (*static_cast<Fn*>(ctx))(i); }, &fn);
}

}  // namespace nonunion
