#pragma once
#include <cstddef>
#include <functional>

namespace cavlab {

// Honors CAVLAB_THREADS (caps std::thread::hardware_concurrency, min 1).
int thread_budget();

// Runs fn(i) for i in [0, n). Work is split into fixed chunks whose boundaries
// do not depend on the thread count, so reductions that accumulate per chunk
// stay deterministic whatever CAVLAB_THREADS says.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

} // namespace cavlab
