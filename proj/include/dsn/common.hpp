#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dsn {

enum class errc { config, data, shape, divergence, checkpoint };

/// Error with a coarse category; the CLI maps categories to exit codes.
class error : public std::runtime_error {
public:
    error(errc kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    errc kind() const noexcept { return kind_; }

private:
    errc kind_;
};

[[noreturn]] inline void fail(errc kind, const std::string& msg) { throw error(kind, msg); }

inline void check(bool ok, errc kind, const std::string& msg) {
    if (!ok) fail(kind, msg);
}

namespace detail {

inline int env_thread_cap() {
    const char* v = std::getenv("DSN_THREADS");
    if (!v || !*v) return 0;  // 0 = auto
    int n = std::atoi(v);
    return n < 0 ? 0 : n;
}

inline void cpu_relax() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_ia32_pause();
#else
    std::this_thread::yield();
#endif
}

// Fixed set of workers; every job is split into one static slice per lane so
// results do not depend on scheduling. Workers spin briefly before sleeping:
// the compute regions are sub-millisecond and arrive back to back, and a
// condition-variable wakeup costs a sizable fraction of one region.
class thread_pool {
public:
    static thread_pool& get() {
        static thread_pool pool;
        return pool;
    }

    int lanes() const { return lanes_; }

    // Nested calls (from a worker lane or re-entrant on the dispatching
    // thread) degrade to serial execution; concurrent top-level callers
    // serialize on run_m_.
    void run(const std::function<void(int)>& lane_fn) {
        if (lanes_ == 1 || tl_inside()) {
            for (int i = 0; i < lanes_; ++i) lane_fn(i);
            return;
        }
        std::lock_guard dispatch_lock(run_m_);
        tl_inside() = true;
        fn_ = &lane_fn;
        pending_.store(lanes_ - 1, std::memory_order_relaxed);
        generation_.fetch_add(1, std::memory_order_release);
        if (sleeping_.load(std::memory_order_acquire) > 0) {
            std::lock_guard lk(m_);
            cv_.notify_all();
        }
        lane_fn(0);
        while (pending_.load(std::memory_order_acquire) > 0) cpu_relax();
        fn_ = nullptr;
        tl_inside() = false;
    }

    thread_pool(const thread_pool&) = delete;

private:
    thread_pool() {
        int cap = env_thread_cap();
        lanes_ = cap > 0 ? cap : (int)std::thread::hardware_concurrency();
        if (lanes_ < 1) lanes_ = 1;
        workers_.reserve((size_t)lanes_ - 1);
        for (int i = 1; i < lanes_; ++i)
            workers_.emplace_back([this, i] { work(i); });
    }

    ~thread_pool() {
        stop_.store(true, std::memory_order_release);
        {
            std::lock_guard lk(m_);
            cv_.notify_all();
        }
        for (auto& w : workers_) w.join();
    }

    static bool& tl_inside() {
        static thread_local bool inside = false;
        return inside;
    }

    void work(int lane) {
        tl_inside() = true;  // lanes never dispatch; nested loops run serial
        uint64_t seen = 0;
        for (;;) {
            uint64_t g;
            int spins = 0;
            while ((g = generation_.load(std::memory_order_acquire)) == seen &&
                   !stop_.load(std::memory_order_acquire)) {
                if (++spins < (1 << 16)) {
                    cpu_relax();
                    continue;
                }
                std::unique_lock lk(m_);
                sleeping_.fetch_add(1, std::memory_order_release);
                cv_.wait(lk, [&] {
                    return stop_.load(std::memory_order_acquire) ||
                           generation_.load(std::memory_order_acquire) != seen;
                });
                sleeping_.fetch_sub(1, std::memory_order_release);
                spins = 0;
            }
            if (stop_.load(std::memory_order_acquire)) return;
            seen = g;
            (*fn_)(lane);
            pending_.fetch_sub(1, std::memory_order_release);
        }
    }

    int lanes_ = 1;
    std::vector<std::thread> workers_;
    std::mutex m_, run_m_;
    std::condition_variable cv_;
    const std::function<void(int)>* fn_ = nullptr;
    std::atomic<int> pending_{0};
    std::atomic<int> sleeping_{0};
    std::atomic<uint64_t> generation_{0};
    std::atomic<bool> stop_{false};
};

}  // namespace detail

inline int parallel_lanes() { return detail::thread_pool::get().lanes(); }

/// Runs body(begin, end) over a static partition of [0, n). Each index is
/// processed by exactly one lane, so the result is identical for any lane
/// count as long as indices touch disjoint data.
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    auto& pool = detail::thread_pool::get();
    const int lanes = pool.lanes();
    if (lanes == 1 || n == 1) {
        body(0, n);
        return;
    }
    const int64_t chunk = (n + lanes - 1) / lanes;
    pool.run([&](int lane) {
        const int64_t b = (int64_t)lane * chunk;
        const int64_t e = std::min(n, b + chunk);
        if (b < e) body(b, e);
    });
}

}  // namespace dsn
