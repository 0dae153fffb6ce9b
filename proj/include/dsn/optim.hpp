#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "dsn/common.hpp"
#include "dsn/tensor.hpp"

namespace dsn {

struct OptimConfig {
    float lr_init = 3e-4f;
    float lr_final = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    int total_epochs = 1000;
};

inline void validate(const OptimConfig& c) {
    check(c.lr_final > 0.f && c.lr_final <= c.lr_init, errc::config,
          "optimizer: need 0 < lr_final <= lr_init");
    check(c.beta1 > 0.f && c.beta1 < 1.f && c.beta2 > 0.f && c.beta2 < 1.f, errc::config,
          "optimizer: betas must be in (0, 1)");
    check(c.total_epochs >= 1, errc::config, "optimizer: total_epochs must be >= 1");
}

/// Trainable tensor with gradient and Adam moment buffers.
struct Parameter {
    Tensor value, grad, adam_m, adam_v;
    int64_t step_count = 0;

    Parameter() = default;
    explicit Parameter(std::vector<int> shape)
        : value(shape), grad(shape), adam_m(shape), adam_v(std::move(shape)) {}

    void zero_grad() { grad.zero(); }
};

/// lr(e) = lr_final + (lr_init - lr_final) * (1 + cos(e*pi/T)) / 2, e clamped
/// to [0, T].
inline double cosine_lr(int epoch, const OptimConfig& cfg) {
    const int T = cfg.total_epochs;
    const int e = std::min(std::max(epoch, 0), T);
    return (double)cfg.lr_final +
           ((double)cfg.lr_init - (double)cfg.lr_final) *
               (1.0 + std::cos((double)e * std::numbers::pi / (double)T)) / 2.0;
}

namespace detail {
inline void adam_update_range(Parameter& p, double lr, const OptimConfig& cfg, int64_t next_step,
                              const int32_t* idx, int64_t n) {
    const float b1 = cfg.beta1, b2 = cfg.beta2;
    const float corr1 = 1.f - (float)std::pow((double)b1, (double)next_step);
    const float corr2 = 1.f - (float)std::pow((double)b2, (double)next_step);
    const float step = (float)lr;
    for (int64_t a = 0; a < n; ++a) {
        const size_t i = idx ? (size_t)idx[a] : (size_t)a;
        const float g = p.grad.data[i];
        p.adam_m.data[i] = b1 * p.adam_m.data[i] + (1.f - b1) * g;
        p.adam_v.data[i] = b2 * p.adam_v.data[i] + (1.f - b2) * g * g;
        const float mhat = p.adam_m.data[i] / corr1;
        const float vhat = p.adam_v.data[i] / corr2;
        p.value.data[i] -= step * mhat / (std::sqrt(vhat) + cfg.eps);
        p.grad.data[i] = 0.f;
    }
}
}  // namespace detail

/// Standard Adam with bias correction; zeroes the gradient after the step.
/// Rejects non-finite gradients before mutating any state.
inline void adam_step(Parameter& p, double lr, const OptimConfig& cfg) {
    for (float g : p.grad.data)
        if (!std::isfinite(g)) fail(errc::divergence, "adam: non-finite gradient, step rejected");
    detail::adam_update_range(p, lr, cfg, p.step_count + 1, nullptr, p.value.size());
    ++p.step_count;
}

/// Adam restricted to the given flat indices. Entries outside the list keep
/// zero gradient and zero moments, so this is exactly the dense update for
/// masked parameters whose inactive gradients are never written.
inline void adam_step_masked(Parameter& p, double lr, const OptimConfig& cfg,
                             const std::vector<int32_t>& active) {
    for (int32_t i : active)
        if (!std::isfinite(p.grad.data[(size_t)i]))
            fail(errc::divergence, "adam: non-finite gradient, step rejected");
    detail::adam_update_range(p, lr, cfg, p.step_count + 1, active.data(), (int64_t)active.size());
    ++p.step_count;
}

}  // namespace dsn
