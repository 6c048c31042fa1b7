#include "tled/parallel.hpp"

#include <cstdlib>
#include <thread>

namespace tled {

namespace {

int initial_thread_count() {
    if (const char *env = std::getenv("TLED_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

} // namespace

int &thread_count() {
    static int count = initial_thread_count();
    return count;
}

} // namespace tled
