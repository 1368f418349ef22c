// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/core/parallel.h"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace matforge {

namespace {

// One submitted parallel_for. Workers hold their own reference, so a worker
// that wakes late can only drain an already exhausted job, never a new one.
struct Job {
    const std::function<void(int64_t, int64_t)>* body = nullptr;
    int64_t num_blocks = 0;
    int64_t block_size = 0;
    int64_t n = 0;
    uint64_t id = 0;
    std::atomic<int64_t> next{0};
    std::atomic<int64_t> done{0};
};

class Pool {
public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    void run(int64_t num_blocks, int64_t block_size, int64_t n,
             const std::function<void(int64_t, int64_t)>& body) {
        int workers = thread_count();
        if (workers <= 1 || num_blocks <= 1) {
            for (int64_t b = 0; b < num_blocks; ++b) {
                int64_t lo = b * block_size;
                body(lo, std::min(lo + block_size, n));
            }
            return;
        }
        ensure_started(workers - 1);

        auto job = std::make_shared<Job>();
        job->body = &body;
        job->num_blocks = num_blocks;
        job->block_size = block_size;
        job->n = n;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            job->id = ++last_job_id_;
            current_ = job;
        }
        work_cv_.notify_all();

        drain(*job);

        std::unique_lock<std::mutex> lock(mutex_);
        done_cv_.wait(lock, [&] { return job->done.load() == job->num_blocks; });
        if (current_ == job) current_.reset();
    }

private:
    Pool() = default;

    ~Pool() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            shutdown_ = true;
        }
        work_cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void ensure_started(int count) {
        std::lock_guard<std::mutex> lock(start_mutex_);
        while (int(threads_.size()) < count) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                work_cv_.wait(lock, [&] {
                    return shutdown_ || (current_ && current_->id != seen);
                });
                if (shutdown_) return;
                job = current_;
                seen = job->id;
            }
            drain(*job);
        }
    }

    void drain(Job& job) {
        for (;;) {
            int64_t b = job.next.fetch_add(1, std::memory_order_relaxed);
            if (b >= job.num_blocks) break;
            int64_t lo = b * job.block_size;
            (*job.body)(lo, std::min(lo + job.block_size, job.n));
            if (job.done.fetch_add(1, std::memory_order_acq_rel) + 1 == job.num_blocks) {
                std::lock_guard<std::mutex> lock(mutex_);
                done_cv_.notify_all();
            }
        }
    }

    std::mutex mutex_;
    std::mutex start_mutex_;
    std::condition_variable work_cv_;
    std::condition_variable done_cv_;
    std::vector<std::thread> threads_;
    std::shared_ptr<Job> current_;
    uint64_t last_job_id_ = 0;
    bool shutdown_ = false;
};

}  // namespace

int thread_count() {
    int hw = int(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    // Re-read each call; tests flip MATFORGE_THREADS at runtime.
    if (const char* env = std::getenv("MATFORGE_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) return cap;
    }
    return hw;
}

void parallel_for_blocks(int64_t n, int64_t block_size,
                         const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    if (block_size < 1) block_size = 1;
    int64_t num_blocks = (n + block_size - 1) / block_size;
    Pool::instance().run(num_blocks, block_size, n, body);
}

void parallel_for_rows(int64_t rows, const std::function<void(int64_t)>& body) {
    parallel_for_blocks(rows, 1, [&](int64_t lo, int64_t hi) {
        for (int64_t r = lo; r < hi; ++r) body(r);
    });
}

}  // namespace matforge
