#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dsn/common.hpp"
#include "dsn/optim.hpp"
#include "dsn/rng.hpp"

namespace dsn {

struct SparsityConfig {
    float sparsity = 0.8f;  // S, fraction of kernel weights forced to zero
    int groups = 3;         // N
    int kernel_size = 39;   // k
};

/// Width of exploration region i (1-based): round(i*k/N), computed exactly in
/// integers with half-up rounding. Nondecreasing in i; width(N) == k.
inline int region_width(int group_1based, int k, int N) {
    return (2 * group_1based * k + N) / (2 * N);
}

/// Activated positions per kernel of a group at initialization:
/// round(width * (1 - S)), half-up.
inline int kernel_budget(int width, double sparsity) {
    return (int)std::floor((double)width * (1.0 - sparsity) + 0.5);
}

inline void validate(const SparsityConfig& c, int c_out) {
    check(c.sparsity >= 0.f && c.sparsity < 1.f, errc::config,
          "sparsity must be in [0, 1), got " + std::to_string(c.sparsity));
    check(c.groups >= 1, errc::config, "groups must be >= 1");
    check(c.kernel_size >= c.groups, errc::config,
          "kernel size " + std::to_string(c.kernel_size) + " must be >= groups " +
              std::to_string(c.groups));
    check(c_out % c.groups == 0, errc::config,
          "groups " + std::to_string(c.groups) + " must divide output channels " +
              std::to_string(c_out));
}

/// Binary activation mask over a conv weight array [c_out, c_in, k]. Output
/// channels are split into `groups` contiguous blocks; bits of group i may
/// only be set within the first region_width(i) tap positions.
struct KernelMask {
    int c_out = 0, c_in = 0, k = 0, groups = 1;
    std::vector<uint8_t> bits;  // one byte per position, [c_out][c_in][k]

    int channels_per_group() const { return c_out / groups; }
    int group_of(int j) const { return j / channels_per_group(); }
    int width_of(int group0) const { return region_width(group0 + 1, k, groups); }

    int64_t flat(int j, int i, int p) const { return ((int64_t)j * c_in + i) * k + p; }

    int64_t popcount() const {
        int64_t n = 0;
        for (uint8_t b : bits) n += b;
        return n;
    }

    int64_t group_popcount(int g) const {
        const int cpg = channels_per_group();
        int64_t n = 0;
        for (int j = g * cpg; j < (g + 1) * cpg; ++j)
            for (int64_t a = flat(j, 0, 0); a < flat(j + 1, 0, 0); ++a) n += bits[(size_t)a];
        return n;
    }

    /// Number of weights in group g's exploration region: c_in * (c_out/N) * width.
    int64_t group_region_size(int g) const {
        return (int64_t)c_in * channels_per_group() * width_of(g);
    }

    /// True when no bit lies outside its group's exploration region.
    bool contained_in_regions() const {
        for (int j = 0; j < c_out; ++j) {
            const int w = width_of(group_of(j));
            for (int i = 0; i < c_in; ++i)
                for (int p = w; p < k; ++p)
                    if (bits[(size_t)flat(j, i, p)]) return false;
        }
        return true;
    }
};

enum class InitMode { sequential, random };
enum class GrowMode { random, gradient };

// Epoch units run the update at epoch boundaries after that epoch's
// optimizer steps; iteration units count optimizer steps and the update
// replaces the gradient step on matching iterations.
enum class UpdateUnit { epoch, iteration };

struct UpdateSchedule {
    int delta_t_epochs = 5;
    double alpha = 0.5;
    int total_epochs = 1000;  // T, in the chosen unit
    GrowMode grow = GrowMode::random;
    UpdateUnit unit = UpdateUnit::epoch;
    bool dynamic = true;  // false = frozen topology after init
};

inline void validate(const UpdateSchedule& s) {
    check(s.delta_t_epochs >= 1, errc::config, "schedule: delta_t must be >= 1");
    check(s.alpha > 0.0 && s.alpha <= 1.0, errc::config, "schedule: alpha must be in (0, 1]");
    check(s.total_epochs >= 1, errc::config, "schedule: total_epochs must be >= 1");
}

/// Fraction of a region's weights refreshed at epoch t:
/// (alpha/2) * (1 + cos(t*pi/T)). Nonincreasing in t; alpha at 0, zero at T.
inline double decay_fraction(int t, double alpha, int total_epochs) {
    return alpha / 2.0 * (1.0 + std::cos((double)t * std::numbers::pi / (double)total_epochs));
}

/// Per-group activation mask. sequential: the first budget positions of each
/// kernel; random: budget positions drawn uniformly within the region.
inline KernelMask init_topology(int c_out, int c_in, const SparsityConfig& cfg, InitMode mode,
                                Rng rng) {
    validate(cfg, c_out);
    KernelMask m;
    m.c_out = c_out;
    m.c_in = c_in;
    m.k = cfg.kernel_size;
    m.groups = cfg.groups;
    m.bits.assign((size_t)c_out * c_in * cfg.kernel_size, 0);
    for (int j = 0; j < c_out; ++j) {
        const int g = m.group_of(j);
        const int width = m.width_of(g);
        const int budget = kernel_budget(width, cfg.sparsity);
        for (int i = 0; i < c_in; ++i) {
            if (mode == InitMode::sequential) {
                for (int p = 0; p < budget; ++p) m.bits[(size_t)m.flat(j, i, p)] = 1;
            } else {
                std::vector<int32_t> region((size_t)width);
                for (int p = 0; p < width; ++p) region[(size_t)p] = p;
                Rng kr = rng.split((uint64_t)j).split((uint64_t)i);
                for (int32_t p : kr.choose(std::move(region), budget))
                    m.bits[(size_t)m.flat(j, i, p)] = 1;
            }
        }
    }
    return m;
}

/// Full-kernel mask used by dense-mode models and 1x1 layers: every position
/// of every kernel active, a single group whose region is the whole kernel.
inline KernelMask full_mask(int c_out, int c_in, int k) {
    KernelMask m;
    m.c_out = c_out;
    m.c_in = c_in;
    m.k = k;
    m.groups = 1;
    m.bits.assign((size_t)c_out * c_in * k, 1);
    return m;
}

/// Unclamped refresh count for a group: round(n(R_i) * f_decay(t) * (1 - S)).
inline int64_t update_count(int64_t region_weights, int t, const UpdateSchedule& sched,
                            double sparsity) {
    const double f = decay_fraction(t, sched.alpha, sched.total_epochs);
    return (int64_t)std::floor((double)region_weights * f * (1.0 - sparsity) + 0.5);
}

/// The u activated positions with smallest |weight|; ties broken by smallest
/// flat index. `active` must be sorted ascending.
inline std::vector<int64_t> prune_indices(const float* weights, const std::vector<int64_t>& active,
                                          int64_t u) {
    check(u <= (int64_t)active.size(), errc::config, "prune: u exceeds activated count");
    std::vector<int64_t> order = active;
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        const float ma = std::fabs(weights[a]), mb = std::fabs(weights[b]);
        if (ma != mb) return ma < mb;
        return a < b;
    });
    order.resize((size_t)u);
    std::sort(order.begin(), order.end());
    return order;
}

struct GrowResult {
    std::vector<int64_t> indices;
    int64_t shortfall = 0;  // how many requested positions could not be grown
};

/// Picks u positions from `candidates` (inactive positions of the region,
/// sorted ascending). random: uniform without replacement; gradient: largest
/// |grad|, ties by smallest flat index. Fewer than u candidates: grows all of
/// them and reports the shortfall.
inline GrowResult grow_indices(const std::vector<int64_t>& candidates, int64_t u, GrowMode mode,
                               Rng rng, const float* dense_grads) {
    GrowResult r;
    if (u >= (int64_t)candidates.size()) {
        r.indices = candidates;
        r.shortfall = u - (int64_t)candidates.size();
        return r;
    }
    if (mode == GrowMode::random) {
        std::vector<int64_t> picked = rng.choose(candidates, u);
        r.indices = std::move(picked);
    } else {
        check(dense_grads != nullptr, errc::config, "grow: gradient mode requires dense gradients");
        std::vector<int64_t> order = candidates;
        std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
            const float ma = std::fabs(dense_grads[a]), mb = std::fabs(dense_grads[b]);
            if (ma != mb) return ma > mb;
            return a < b;
        });
        order.resize((size_t)u);
        std::sort(order.begin(), order.end());
        r.indices = std::move(order);
    }
    return r;
}

struct TopoStepStats {
    int64_t changed = 0;    // pruned + grown bits over all groups
    int64_t requested = 0;  // sum of clamped u over all groups
};

/// One prune/regrow update of a layer's mask (all groups). Prunes the u
/// smallest-|weight| activated positions per group, grows u positions inside
/// the region that were inactive before the update, zeroes weight values and
/// Adam moments at grown positions. Per-group activated counts are conserved
/// exactly: u is clamped to both the activated count and the inactive count.
inline TopoStepStats topology_update_step(Parameter& weights, KernelMask& mask, int t,
                                          const UpdateSchedule& sched, double sparsity, Rng rng,
                                          const float* dense_grads = nullptr) {
    TopoStepStats stats;
    const int cpg = mask.channels_per_group();
    for (int g = 0; g < mask.groups; ++g) {
        const int width = mask.width_of(g);
        std::vector<int64_t> active, inactive;
        for (int j = g * cpg; j < (g + 1) * cpg; ++j)
            for (int i = 0; i < mask.c_in; ++i)
                for (int p = 0; p < width; ++p) {
                    const int64_t f = mask.flat(j, i, p);
                    (mask.bits[(size_t)f] ? active : inactive).push_back(f);
                }
        int64_t u = update_count(mask.group_region_size(g), t, sched, sparsity);
        u = std::min({u, (int64_t)active.size(), (int64_t)inactive.size()});
        if (u <= 0) continue;

        const std::vector<int64_t> pruned = prune_indices(weights.value.ptr(), active, u);
        const GrowResult grown = grow_indices(inactive, u, sched.grow, rng.split((uint64_t)g),
                                              dense_grads);
        for (int64_t f : pruned) {
            mask.bits[(size_t)f] = 0;
            weights.grad.data[(size_t)f] = 0.f;
        }
        for (int64_t f : grown.indices) {
            mask.bits[(size_t)f] = 1;
            weights.value.data[(size_t)f] = 0.f;
            weights.grad.data[(size_t)f] = 0.f;
            weights.adam_m.data[(size_t)f] = 0.f;
            weights.adam_v.data[(size_t)f] = 0.f;
        }
        stats.requested += u;
        stats.changed += (int64_t)pruned.size() + (int64_t)grown.indices.size();
    }
    return stats;
}

}  // namespace dsn
