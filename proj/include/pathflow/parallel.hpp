#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace pathflow {

/// Number of worker threads: PATHFLOW_THREADS if set, hardware concurrency
/// otherwise, at least 1.
inline int thread_count() {
    if (const char* env = std::getenv("PATHFLOW_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Runs fn(i) for i in [0, n). Work is handed out in contiguous chunks via an
/// atomic cursor, so per-index results must be written to caller-owned slots;
/// any reduction happens afterwards in index order to keep results
/// independent of scheduling. The first exception thrown by a worker is
/// rethrown on the calling thread after all workers drain.
inline void parallel_for(long n, const std::function<void(long)>& fn, long chunk = 64) {
    if (n <= 0) return;
    int workers = thread_count();
    if (workers <= 1 || n <= chunk) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<long> cursor{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run = [&] {
        for (;;) {
            if (failed.load(std::memory_order_relaxed)) return;
            long begin = cursor.fetch_add(chunk);
            if (begin >= n) return;
            long end = std::min(begin + chunk, n);
            try {
                for (long i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int t = 0; t < workers - 1; ++t) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Mean and standard error accumulated in fixed index order.
struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
    long n = 0;
};

/// Reduces a vector of per-path samples (index order, deterministic).
inline McEstimate reduce_mean_se(const std::vector<double>& samples) {
    McEstimate out;
    out.n = static_cast<long>(samples.size());
    if (out.n == 0) return out;
    double sum = 0.0;
    for (double v : samples) sum += v;
    out.mean = sum / static_cast<double>(out.n);
    double ss = 0.0;
    for (double v : samples) {
        double d = v - out.mean;
        ss += d * d;
    }
    if (out.n > 1) {
        double var = ss / static_cast<double>(out.n - 1);
        out.se = std::sqrt(var / static_cast<double>(out.n));
    }
    return out;
}

} // namespace pathflow
