#pragma once

#include <cstddef>
#include <functional>
#include <optional>

namespace quoka {

// Explicit request, else $QUOKA_THREADS, else hardware parallelism (>= 1).
std::size_t resolve_threads(std::optional<std::size_t> requested);

// Runs fn(0..n-1) on up to `threads` workers. The first exception thrown by
// any task is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

} // namespace quoka
