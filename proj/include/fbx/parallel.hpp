#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fbx {

// Worker count: FBX_THREADS env override, else hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("FBX_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return unsigned(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

// Runs fn(i) for every i in [0, count) across workers.  fn seeds its own RNG
// from i, so results must not depend on scheduling; callers aggregate with
// order-independent reductions (or index-addressed buffers).
template <class Fn>
inline void parallel_for_index(std::uint64_t count, Fn&& fn) {
    unsigned workers = worker_count();
    if (workers <= 1 || count < 2) {
        for (std::uint64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::uint64_t> cursor{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const std::uint64_t chunk = count > 4096 ? 64 : 1;
    auto work = [&] {
        for (;;) {
            std::uint64_t begin = cursor.fetch_add(chunk);
            if (begin >= count) return;
            std::uint64_t end = std::min(begin + chunk, count);
            try {
                for (std::uint64_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace fbx
