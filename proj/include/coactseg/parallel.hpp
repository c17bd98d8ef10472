#pragma once

#include <cstddef>
#include <functional>

namespace coact {

/// Worker count for data-parallel kernels. Read once from COACTSEG_THREADS,
/// falling back to the hardware concurrency.
std::size_t worker_count();

/// Overrides the worker count for the rest of the process (0 restores the default).
void set_worker_count(std::size_t n);

/// Runs fn(i) for every i in [begin, end). Indices are split into contiguous
/// chunks, one per worker; each index is visited exactly once, so kernels that
/// write disjoint outputs per index are deterministic for any worker count.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn);

}  // namespace coact
