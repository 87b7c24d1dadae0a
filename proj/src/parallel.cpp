#include "reclab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace reclab {
namespace {
std::atomic<unsigned> g_workers{1};
}

void set_workers(unsigned w) { g_workers = std::max(1U, w); }

unsigned workers() { return g_workers; }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    const std::size_t n_threads = std::min<std::size_t>(workers(), count);
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    // The error reported is the one from the lowest failing index, so a
    // failing run reports the same error for every worker count.
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::size_t first_error_index = count;
    std::mutex error_mutex;
    auto run = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < first_error_index) {
                    first_error_index = i;
                    first_error = std::current_exception();
                }
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(n_threads - 1);
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace reclab
