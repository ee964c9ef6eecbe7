#pragma once
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace exosim {

// index-based parallel for with deterministic work placement; results must be
// written to per-index slots so the outcome is independent of scheduling
inline void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= count) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int n = std::min<size_t>(size_t(jobs), count) - 1;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

} // namespace exosim
