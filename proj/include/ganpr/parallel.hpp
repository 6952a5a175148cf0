#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ganpr {

namespace detail {
inline bool& in_worker_flag() {
    thread_local bool flag = false;
    return flag;
}
}  // namespace detail

// Static-partition parallel_for. Each index is processed exactly once by
// exactly one thread, so results are bit-identical for any thread count
// as long as the body writes only to locations owned by its index.
// Thread count comes from GANPR_THREADS or hardware_concurrency.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    int thread_count() const { return static_cast<int>(workers_.size()) + 1; }

    void run(int64_t begin, int64_t end, const std::function<void(int64_t, int64_t)>& body) {
        const int64_t n = end - begin;
        if (n <= 0) return;
        // Nested calls (a body spawning parallel work, on any thread) run serially.
        if (thread_count() == 1 || n == 1 || detail::in_worker_flag()) {
            body(begin, end);
            return;
        }
        const int64_t use = std::min<int64_t>(thread_count(), n);
        const int64_t chunk = (n + use - 1) / use;
        const int64_t nchunks = (n + chunk - 1) / chunk;
        {
            std::unique_lock<std::mutex> lock(mu_);
            job_ = &body;
            job_begin_ = begin;
            job_end_ = end;
            job_chunk_ = chunk;
            next_chunk_ = 1;  // chunk 0 runs on the calling thread
            pending_ = static_cast<int>(nchunks - 1);
            generation_++;
        }
        if (nchunks > 1) cv_.notify_all();
        detail::in_worker_flag() = true;
        try {
            body(begin, std::min(end, begin + chunk));
        } catch (...) {
            detail::in_worker_flag() = false;
            wait_pending();
            throw;
        }
        detail::in_worker_flag() = false;
        wait_pending();
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

private:
    ThreadPool() {
        int n = 0;
        if (const char* env = std::getenv("GANPR_THREADS")) n = std::atoi(env);
        if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
        if (n <= 0) n = 1;
        for (int i = 0; i < n - 1; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    void wait_pending() {
        std::unique_lock<std::mutex> lock(mu_);
        done_cv_.wait(lock, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

    void worker_loop() {
        detail::in_worker_flag() = true;
        uint64_t seen = 0;
        for (;;) {
            const std::function<void(int64_t, int64_t)>* job = nullptr;
            int64_t lo = 0, hi = 0;
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                if (job_ != nullptr) {
                    const int64_t idx = next_chunk_++;
                    lo = job_begin_ + idx * job_chunk_;
                    if (lo < job_end_) {
                        job = job_;
                        hi = std::min(job_end_, lo + job_chunk_);
                    }
                }
            }
            if (job == nullptr) continue;  // no chunk left in this generation
            (*job)(lo, hi);
            {
                std::unique_lock<std::mutex> lock(mu_);
                pending_--;
                if (pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(int64_t, int64_t)>* job_ = nullptr;
    int64_t job_begin_ = 0, job_end_ = 0, job_chunk_ = 0, next_chunk_ = 0;
    int pending_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

template <typename Body>
void parallel_for(int64_t begin, int64_t end, const Body& body) {
    const std::function<void(int64_t, int64_t)> fn = [&body](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) body(i);
    };
    ThreadPool::instance().run(begin, end, fn);
}

}  // namespace ganpr
