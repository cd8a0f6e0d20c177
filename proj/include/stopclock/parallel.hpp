#pragma once

#include <cstddef>
#include <functional>

namespace stopclock {

/// Worker count from `requested`, falling back to STOPCLOCK_THREADS, then to 1.
unsigned resolve_threads(unsigned requested);

/// Calls fn(i) for i in [0, n) over `threads` workers. Work is split into
/// contiguous index blocks; callers must write results by index so output is
/// independent of the worker count.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace stopclock
