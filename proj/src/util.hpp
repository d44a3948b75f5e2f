// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace lwq {

// Runs fn(i) for i in [0, n) on up to n_threads workers and returns the
// results indexed by i, so any later reduction happens in a fixed order
// regardless of scheduling.
template <typename T>
std::vector<T> parallel_map(int64_t n, int n_threads, const std::function<T(int64_t)>& fn) {
    std::vector<T> out(static_cast<size_t>(n));
    if (n_threads <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; i++) out[static_cast<size_t>(i)] = fn(i);
        return out;
    }
    std::vector<std::thread> workers;
    std::atomic<int64_t> next{0};
    int k = std::min<int64_t>(n_threads, n);
    for (int w = 0; w < k; w++) {
        workers.emplace_back([&] {
            for (;;) {
                int64_t i = next.fetch_add(1);
                if (i >= n) return;
                out[static_cast<size_t>(i)] = fn(i);
            }
        });
    }
    for (auto& t : workers) t.join();
    return out;
}

} // namespace lwq
