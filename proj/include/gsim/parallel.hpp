#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace gsim {

// Static block partition of [0, count) over `threads` workers. Work items
// must touch disjoint state (or be reduced afterwards in item order).
inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    int n_workers = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back([&, w]() {
            for (int i = w; i < count; i += n_workers) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace gsim
