#pragma once

#include <cstddef>
#include <functional>

namespace petlab {

/// Worker count: PETLAB_THREADS if set and positive, else the hardware
/// concurrency, never more than `requested` when that is nonzero.
std::size_t worker_count(std::size_t requested = 0);

/// Runs body(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

} // namespace petlab
