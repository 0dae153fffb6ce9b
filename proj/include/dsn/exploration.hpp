#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdint>
#include <string>

#include "dsn/common.hpp"

namespace dsn {

using bigint = boost::multiprecision::cpp_int;

/// Exact C(n, k); zero when k is outside [0, n].
inline bigint binomial(int64_t n, int64_t k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    bigint r = 1;
    for (int64_t i = 1; i <= k; ++i) {
        r *= (n - k + i);
        r /= i;  // exact at every step: r is C(n-k+i, i)
    }
    return r;
}

enum class SpaceKind { layerwise, grouped, grouped_regions };

namespace detail {
inline int64_t exact_count(double x, const std::string& what) {
    const double r = std::round(x);
    check(std::abs(x - r) < 1e-6, errc::config,
          what + " must be an integer, got " + std::to_string(x));
    return (int64_t)r;
}
}  // namespace detail

/// Size of the topology search space for a layer with N_l kernel weights at
/// sparsity S.
///   layerwise:       C(N_l, N_l(1-S))
///   grouped:         C(N_l/N, N_l(1-S)/N)^N
///   grouped_regions: prod_{i=1..N} C(i*N_l/N^2, N_l(1-S)/N)
/// Arguments that fail the integrality/divisibility constraints are rejected.
inline bigint exploration_space_size(SpaceKind kind, int64_t total_weights, double sparsity,
                                     int groups) {
    check(total_weights >= 1, errc::config, "exploration space: N_l must be >= 1");
    check(sparsity >= 0.0 && sparsity < 1.0, errc::config,
          "exploration space: sparsity must be in [0, 1)");
    check(groups >= 1, errc::config, "exploration space: groups must be >= 1");
    const int64_t active =
        detail::exact_count((double)total_weights * (1.0 - sparsity), "N_l*(1-S)");
    switch (kind) {
        case SpaceKind::layerwise:
            return binomial(total_weights, active);
        case SpaceKind::grouped: {
            check(total_weights % groups == 0, errc::config,
                  "exploration space: N must divide N_l");
            check(active % groups == 0, errc::config,
                  "exploration space: N must divide N_l*(1-S)");
            bigint per = binomial(total_weights / groups, active / groups);
            bigint r = 1;
            for (int i = 0; i < groups; ++i) r *= per;
            return r;
        }
        case SpaceKind::grouped_regions: {
            check(total_weights % ((int64_t)groups * groups) == 0, errc::config,
                  "exploration space: N^2 must divide N_l");
            check(active % groups == 0, errc::config,
                  "exploration space: N must divide N_l*(1-S)");
            bigint r = 1;
            for (int64_t i = 1; i <= groups; ++i)
                r *= binomial(i * total_weights / ((int64_t)groups * groups), active / groups);
            return r;
        }
    }
    fail(errc::config, "exploration space: unknown kind");
}

}  // namespace dsn
