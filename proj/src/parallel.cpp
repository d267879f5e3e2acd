#include "cavlab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace cavlab {

int thread_budget() {
    int hw = int(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("CAVLAB_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) hw = std::min(hw, cap);
    }
    return hw;
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    int workers = thread_budget();
    if (workers <= 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    auto run = [&] {
        size_t i;
        while ((i = next.fetch_add(1)) < n) fn(i);
    };
    std::vector<std::thread> pool;
    int spawn = std::min<size_t>(size_t(workers), n) - 1;
    pool.reserve(size_t(spawn));
    for (int t = 0; t < spawn; ++t) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
}

} // namespace cavlab
