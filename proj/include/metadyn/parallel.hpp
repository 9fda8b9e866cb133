#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace metadyn {

// Worker cap: RM_THREADS if set, else hardware concurrency. Results must never
// depend on this value; workers only fill disjoint output slots.
inline int worker_count() {
    if (const char* env = std::getenv("RM_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) on up to worker_count() threads. Index i is
// sharded statically, so each i always lands in the same call order per worker
// and outputs indexed by i are deterministic regardless of thread count.
inline void parallel_for(int n, const std::function<void(int)>& fn, int max_workers = -1) {
    int workers = max_workers > 0 ? max_workers : worker_count();
    if (workers > n) workers = n;
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

} // namespace metadyn
