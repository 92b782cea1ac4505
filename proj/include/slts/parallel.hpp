#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace slts {

// Chunked parallel map over [0, n). Each index is processed exactly once and
// results must be written to caller-owned slots, so output is deterministic
// regardless of the thread count.
template <class Fn>
void parallel_for(size_t n, Fn&& fn, int threads = 0) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    size_t nt = std::min<size_t>(static_cast<size_t>(threads), n);
    if (nt <= 1 || n < 4) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (size_t t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            for (size_t i = t; i < n; i += nt) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace slts
