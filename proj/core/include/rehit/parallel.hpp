#pragma once

#include <cstdint>
#include <functional>

namespace rehit {

// Worker count: REHIT_THREADS env var if set, else hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, n). Work items must write disjoint memory so the
// result is independent of the thread count; within one item evaluation
// order is sequential, which keeps floating point bit-reproducible.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

// Chunked variant: fn(begin, end) over disjoint ranges.
void parallel_for_chunked(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace rehit
