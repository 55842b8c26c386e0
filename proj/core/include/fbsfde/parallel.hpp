#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace fbsfde {

/// Process-wide cap on worker threads. Results never depend on this value:
/// every parallel loop writes disjoint slots and reductions run serially.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs fn(begin, end) over contiguous chunks of [0, n).
template <typename Fn>
void parallel_for_chunks(std::size_t n, Fn&& fn)
{
    const std::size_t workers = std::min(thread_count(), std::max<std::size_t>(n / 256, 1));
    if (workers <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, w, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn)
{
    parallel_for_chunks(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
    });
}

}  // namespace fbsfde
