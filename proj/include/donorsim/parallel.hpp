#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace donorsim {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers write results
// into slots keyed by i, so the outcome is independent of the worker count.
// The first exception thrown by any task is rethrown here.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    const std::size_t k = std::clamp<std::size_t>(workers < 1 ? 1 : std::size_t(workers), 1, std::max<std::size_t>(n, 1));
    if (k == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lk(mu);
                if (!err) err = std::current_exception();
                next.store(n);
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(k);
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace donorsim
