#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace pbtd {

/// Runs body(0), ..., body(n-1) across a transient worker pool. Execution
/// order is unspecified, so bodies must not depend on each other and must
/// catch their own exceptions. threads < 2 runs inline.
inline void parallel_for(int n, int threads, const std::function<void(int)>& body) {
    if (threads < 2 || n < 2) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    };
    std::vector<std::thread> pool;
    const int k = std::min(threads, n);
    pool.reserve(k);
    for (int i = 0; i < k; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

}  // namespace pbtd
