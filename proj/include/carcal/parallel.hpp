#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace carcal {

/// Runs f(i) for i in [0, n) on up to `jobs` threads. Tasks must be
/// independent and write only their own output slot, which keeps results
/// identical for any worker count.
template <typename F>
void parallel_for(std::size_t n, unsigned jobs, F&& f) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    const unsigned workers = unsigned(std::min<std::size_t>(jobs, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) f(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace carcal
