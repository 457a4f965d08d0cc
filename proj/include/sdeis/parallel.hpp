#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace sdeis {

/// Worker count used when a call does not specify one; 0 means hardware concurrency.
void set_default_threads(unsigned n);
unsigned default_threads();

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
///
/// Work is handed out dynamically, so callers must write results by index.
/// If several indices throw, the exception of the smallest index is rethrown,
/// which keeps error reporting independent of scheduling.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn)
{
    if (threads == 0)
        threads = default_threads();
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> min_failed{n};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::size_t> error_index(threads, n);

    // Indices are handed out in increasing order, so once index k has failed
    // every index below k has already been claimed and will finish.
    auto worker = [&](unsigned w) {
        for (;;) {
            std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n || i > min_failed.load(std::memory_order_relaxed))
                return;
            try {
                fn(i);
            } catch (...) {
                if (i < error_index[w]) {
                    errors[w] = std::current_exception();
                    error_index[w] = i;
                }
                std::size_t cur = min_failed.load();
                while (i < cur && !min_failed.compare_exchange_weak(cur, i)) {
                }
            }
        }
    };

    {
        std::vector<std::jthread> pool;
        pool.reserve(threads - 1);
        for (unsigned w = 1; w < threads; ++w)
            pool.emplace_back(worker, w);
        worker(0);
    }

    std::size_t best = n;
    std::exception_ptr first;
    for (unsigned w = 0; w < threads; ++w)
        if (errors[w] && error_index[w] < best) {
            best = error_index[w];
            first = errors[w];
        }
    if (first)
        std::rethrow_exception(first);
}

}  // namespace sdeis
