#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace nlqmm {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// processed exactly once; results must be written into per-index slots by
// the caller so the schedule cannot affect the outcome.
inline void parallel_for_indexed(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> pool;
    const int k = std::min(threads, n);
    pool.reserve(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

}  // namespace nlqmm
