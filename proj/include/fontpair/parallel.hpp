#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace fontpair {

inline int default_workers() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : int(n);
}

// Runs fn(worker, begin, end) on `workers` threads over contiguous index
// chunks. The partition depends only on (n, workers), so callers that reduce
// per-worker results in worker order stay deterministic for a fixed worker
// count. workers <= 1 runs inline.
inline void parallel_chunks(int64_t n, int workers,
                            const std::function<void(int, int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    if (workers > n) workers = int(n);
    if (workers <= 1) {
        fn(0, 0, n);
        return;
    }
    int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    threads.reserve(size_t(workers));
    for (int w = 0; w < workers; ++w) {
        int64_t begin = int64_t(w) * chunk;
        int64_t end = begin + chunk < n ? begin + chunk : n;
        if (begin >= end) break;
        threads.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
    }
    for (auto& t : threads) t.join();
}

} // namespace fontpair
