#pragma once

#include <cstddef>
#include <functional>

namespace sardist {

/// Thread count to use: `requested` if nonzero, else $SARDIST_THREADS, else
/// the hardware concurrency (at least 1).
unsigned resolve_threads(unsigned requested = 0);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is split into
/// contiguous index ranges; the first exception thrown is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace sardist
