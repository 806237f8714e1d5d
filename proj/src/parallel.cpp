#include "rip/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace rip {

namespace {

class Pool {
public:
    Pool() {
        std::size_t n = std::thread::hardware_concurrency();
        if (const char* env = std::getenv("RIP_THREADS")) {
            long v = std::atol(env);
            if (v >= 1) n = static_cast<std::size_t>(v);
        }
        if (n < 1) n = 1;
        workers_ = n;
        for (std::size_t t = 1; t < workers_; ++t) {
            threads_.emplace_back([this, t] { worker_loop(t); });
        }
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& th : threads_) th.join();
    }

    std::size_t size() const { return workers_; }

    void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
        if (n == 0) return;
        std::size_t parts = workers_ < n ? workers_ : n;
        if (parts <= 1) {
            body(0, n);
            return;
        }
        {
            std::lock_guard<std::mutex> lk(mu_);
            body_ = &body;
            total_ = n;
            parts_ = parts;
            pending_.store(static_cast<int>(parts) - 1, std::memory_order_relaxed);
            ++epoch_;
        }
        cv_.notify_all();
        run_part(0);
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return pending_.load(std::memory_order_acquire) == 0; });
        body_ = nullptr;
    }

private:
    void run_part(std::size_t part) {
        const std::size_t chunk = (total_ + parts_ - 1) / parts_;
        const std::size_t begin = part * chunk;
        const std::size_t end = begin + chunk < total_ ? begin + chunk : total_;
        if (begin < end) (*body_)(begin, end);
    }

    void worker_loop(std::size_t tid) {
        std::uint64_t seen = 0;
        for (;;) {
            std::unique_lock<std::mutex> lk(mu_);
            cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
            if (stop_) return;
            seen = epoch_;
            std::size_t part = tid;
            bool mine = part < parts_;
            lk.unlock();
            if (mine) {
                run_part(part);
                if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                    std::lock_guard<std::mutex> g(mu_);
                    done_cv_.notify_all();
                }
            }
        }
    }

    std::size_t workers_ = 1;
    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::size_t, std::size_t)>* body_ = nullptr;
    std::size_t total_ = 0;
    std::size_t parts_ = 0;
    std::uint64_t epoch_ = 0;
    std::atomic<int> pending_{0};
    bool stop_ = false;
};

Pool& pool() {
    static Pool p;
    return p;
}

}  // namespace

std::size_t thread_count() { return pool().size(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    pool().run(n, body);
}

}  // namespace rip
