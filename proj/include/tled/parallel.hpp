#ifndef TLED_PARALLEL_HPP_
#define TLED_PARALLEL_HPP_

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tled {

// Worker count: --threads flag / TLED_THREADS env / machine parallelism.
int &thread_count();

// Splits [0, n) into fixed chunks and runs fn(begin, end) on each.
// Partitioning is independent of scheduling, so per-chunk results are
// reproducible at any thread count; callers reduce them in index order.
template <typename Fn>
void parallel_for(std::ptrdiff_t n, Fn &&fn) {
    const int threads = std::max(1, thread_count());
    if (threads == 1 || n < 2048) {
        fn(std::ptrdiff_t{0}, n);
        return;
    }
    const std::ptrdiff_t chunk = (n + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::exception_ptr error;
    std::mutex errorMutex;
    for (std::ptrdiff_t begin = 0; begin < n; begin += chunk) {
        const std::ptrdiff_t end = std::min(n, begin + chunk);
        pool.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(errorMutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto &t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace tled

#endif // TLED_PARALLEL_HPP_
