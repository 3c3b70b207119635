#pragma once

// Deterministic task-pool helper. Tasks are claimed from an atomic counter;
// results must be written into task-indexed slots so the output layout
// never depends on scheduling or worker count.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace linepix {

inline int default_worker_count() {
    if (const char* env = std::getenv("LINEPIX_WORKERS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

// fn(task_index, worker_index); worker_index < workers lets callers keep
// per-worker scratch state.
inline void parallel_run(std::size_t n_tasks, int workers,
                         const std::function<void(std::size_t, int)>& fn) {
    if (workers < 1) workers = 1;
    if (n_tasks == 0) return;
    if (workers == 1 || n_tasks == 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i, 0);
        return;
    }
    workers = static_cast<int>(std::min<std::size_t>(workers, n_tasks));

    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;

    auto body = [&](int worker) {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n_tasks) return;
            try {
                fn(i, worker);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n_tasks);  // drain remaining work
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace linepix
