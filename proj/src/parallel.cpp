#include "fpnet/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace fpnet::parallel {

namespace {

// Tiny fork-join pool. Workers spin up lazily on the first parallel region
// after set_num_threads(n > 1) and are joined when the count drops back.
class Pool {
public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    int threads() const { return threads_.load(); }

    void set_threads(int n) {
        if (n < 1) n = 1;
        std::lock_guard<std::mutex> lk(run_mutex_);
        stop_workers();
        threads_.store(n);
    }

    void run(std::int64_t n, std::int64_t chunk_size,
             const std::function<void(std::int64_t, std::int64_t)>& fn) {
        if (n <= 0) return;
        if (chunk_size < 1) chunk_size = 1;
        const int nthreads = threads_.load();
        if (nthreads <= 1 || n <= chunk_size) {
            for (std::int64_t b = 0; b < n; b += chunk_size) {
                fn(b, std::min(n, b + chunk_size));
            }
            return;
        }
        std::lock_guard<std::mutex> lk(run_mutex_);
        start_workers(nthreads - 1);
        {
            std::lock_guard<std::mutex> jk(job_mutex_);
            job_fn_ = &fn;
            job_n_ = n;
            job_chunk_ = chunk_size;
            next_chunk_.store(0);
            pending_.store(static_cast<int>(workers_.size()));
            ++generation_;
        }
        job_cv_.notify_all();
        work(fn, n, chunk_size);  // caller participates
        std::unique_lock<std::mutex> jk(job_mutex_);
        done_cv_.wait(jk, [&] { return pending_.load() == 0; });
        job_fn_ = nullptr;
    }

private:
    Pool() = default;
    ~Pool() { stop_workers(); }

    void work(const std::function<void(std::int64_t, std::int64_t)>& fn,
              std::int64_t n, std::int64_t chunk) {
        for (;;) {
            std::int64_t b = next_chunk_.fetch_add(chunk);
            if (b >= n) return;
            fn(b, std::min(n, b + chunk));
        }
    }

    void start_workers(int count) {
        if (static_cast<int>(workers_.size()) == count) return;
        stop_workers();
        stop_.store(false);
        for (int i = 0; i < count; ++i) {
            workers_.emplace_back([this] {
                std::uint64_t seen = 0;
                for (;;) {
                    const std::function<void(std::int64_t, std::int64_t)>* fn = nullptr;
                    std::int64_t n = 0, chunk = 0;
                    {
                        std::unique_lock<std::mutex> jk(job_mutex_);
                        job_cv_.wait(jk, [&] {
                            return stop_.load() || (job_fn_ != nullptr && generation_ != seen);
                        });
                        if (stop_.load()) return;
                        seen = generation_;
                        fn = job_fn_;
                        n = job_n_;
                        chunk = job_chunk_;
                    }
                    work(*fn, n, chunk);
                    if (pending_.fetch_sub(1) == 1) {
                        std::lock_guard<std::mutex> jk(job_mutex_);
                        done_cv_.notify_all();
                    }
                }
            });
        }
    }

    void stop_workers() {
        if (workers_.empty()) return;
        {
            std::lock_guard<std::mutex> jk(job_mutex_);
            stop_.store(true);
        }
        job_cv_.notify_all();
        for (auto& t : workers_) t.join();
        workers_.clear();
        stop_.store(false);
    }

    std::atomic<int> threads_{1};
    std::atomic<bool> stop_{false};
    std::atomic<std::int64_t> next_chunk_{0};
    std::atomic<int> pending_{0};
    std::uint64_t generation_ = 0;
    const std::function<void(std::int64_t, std::int64_t)>* job_fn_ = nullptr;
    std::int64_t job_n_ = 0;
    std::int64_t job_chunk_ = 0;
    std::mutex run_mutex_;
    std::mutex job_mutex_;
    std::condition_variable job_cv_;
    std::condition_variable done_cv_;
    std::vector<std::thread> workers_;
};

}  // namespace

int num_threads() { return Pool::instance().threads(); }

void set_num_threads(int n) { Pool::instance().set_threads(n); }

void parallel_for(std::int64_t n, std::int64_t chunk_size,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
    Pool::instance().run(n, chunk_size, fn);
}

}  // namespace fpnet::parallel
