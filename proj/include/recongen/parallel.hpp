#pragma once

// Minimal deterministic parallel-for. Items are split into contiguous chunks
// by index, one per worker, so the work assignment (and any per-item seeding)
// never depends on thread scheduling.

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace recongen {

inline int default_worker_count() {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

template <class Fn>
void parallel_for(size_t n, int workers, Fn&& fn) {
    if (n == 0) return;
    workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (workers == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    size_t chunk = (n + static_cast<size_t>(workers) - 1) / static_cast<size_t>(workers);
    for (int w = 0; w < workers; ++w) {
        size_t lo = static_cast<size_t>(w) * chunk;
        size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace recongen
