#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace dsn {

namespace detail {
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}
inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) h = (h ^ (uint8_t)c) * 0x100000001B3ull;
    return h;
}
}  // namespace detail

/// Counter-based generator (splitmix64 core). A seed plus the path of split
/// labels fully determines every draw, so independent consumers can derive
/// their own streams without coordinating.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(detail::mix64(seed ^ 0x9E3779B97F4A7C15ull)) {}

    Rng split(uint64_t label) const {
        Rng r(0);
        r.state_ = detail::mix64(state_ ^ (0x9E3779B97F4A7C15ull * (label + 0x632BE59BD9B4E019ull)));
        return r;
    }
    Rng split(std::string_view label) const { return split(detail::fnv1a(label)); }

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return detail::mix64(state_);
    }

    /// Uniform in [0, 1).
    double next_double() { return (double)(next_u64() >> 11) * 0x1.0p-53; }
    float next_float() { return (float)next_double(); }

    /// Uniform integer in [0, n); n must be positive.
    int64_t next_below(int64_t n) { return (int64_t)(next_double() * (double)n); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    /// One standard normal draw (Box-Muller, two uniforms per call).
    float normal() {
        double u1 = 1.0 - next_double();  // (0, 1]
        double u2 = next_double();
        return (float)(std::sqrt(-2.0 * std::log(u1)) *
                       std::cos(2.0 * std::numbers::pi * u2));
    }

    /// Chooses k of the given candidates uniformly without replacement;
    /// result is sorted ascending. k must not exceed candidates.size().
    template <typename T>
    std::vector<T> choose(std::vector<T> pool, int64_t k) {
        const int64_t n = (int64_t)pool.size();
        for (int64_t i = 0; i < k; ++i) {
            int64_t j = i + next_below(n - i);
            std::swap(pool[(size_t)i], pool[(size_t)j]);
        }
        pool.resize((size_t)k);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

private:
    uint64_t state_;
};

}  // namespace dsn
