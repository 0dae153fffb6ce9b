#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <tuple>
#include <vector>

#include "dsn/common.hpp"
#include "dsn/tensor.hpp"

namespace dsn {

// Same-padding split for stride-1 convolution: output length equals input
// length for every k. floor(k/2) zeros on the left, k-1-floor(k/2) on the
// right.
inline int pad_left_of(int k) { return k / 2; }

namespace kern {

inline void axpy(float a, const float* __restrict x, float* __restrict y, int64_t n) {
    for (int64_t t = 0; t < n; ++t) y[t] += a * x[t];
}

// Eight fixed partial sums, combined in a fixed tree; deterministic and
// vectorizable without reassociation license.
inline float dot(const float* __restrict a, const float* __restrict b, int64_t n) {
    float acc[8] = {0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f};
    int64_t t = 0;
    for (; t + 8 <= n; t += 8)
        for (int u = 0; u < 8; ++u) acc[u] += a[t + u] * b[t + u];
    float tail = 0.f;
    for (; t < n; ++t) tail += a[t] * b[t];
    return (((acc[0] + acc[1]) + (acc[2] + acc[3])) +
            ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail;
}

}  // namespace kern

/// Active-tap index lists for a (possibly masked) conv kernel, in the two
/// traversal orders the compute kernels need. Tap encoding: i*k + p.
struct ConvTaps {
    int c_out = 0, c_in = 0, k = 0;
    std::vector<int32_t> out_taps;  // grouped by output channel j, (i, p) ascending
    std::vector<int32_t> out_off;   // c_out + 1 offsets into out_taps
    std::vector<int32_t> in_taps;   // grouped by input channel i, tap = j*k + p
    std::vector<int32_t> in_off;    // c_in + 1 offsets into in_taps

    int64_t active() const { return (int64_t)out_taps.size(); }

    /// Flat weight indices (j*c_in*k + i*k + p) of all active taps, ascending.
    std::vector<int32_t> flat_indices() const {
        std::vector<int32_t> out;
        out.reserve(out_taps.size());
        for (int j = 0; j < c_out; ++j)
            for (int32_t a = out_off[(size_t)j]; a < out_off[(size_t)j + 1]; ++a)
                out.push_back((int32_t)((int64_t)j * c_in * k + out_taps[(size_t)a]));
        return out;
    }

    static ConvTaps build(const uint8_t* bits, int c_out, int c_in, int k) {
        ConvTaps t;
        t.c_out = c_out;
        t.c_in = c_in;
        t.k = k;
        t.out_off.assign((size_t)c_out + 1, 0);
        t.in_off.assign((size_t)c_in + 1, 0);
        for (int j = 0; j < c_out; ++j) {
            for (int i = 0; i < c_in; ++i) {
                const uint8_t* row = bits + ((int64_t)j * c_in + i) * k;
                for (int p = 0; p < k; ++p)
                    if (row[p]) t.out_taps.push_back(i * k + p);
            }
            t.out_off[(size_t)j + 1] = (int32_t)t.out_taps.size();
        }
        for (int i = 0; i < c_in; ++i) {
            for (int j = 0; j < c_out; ++j) {
                const uint8_t* row = bits + ((int64_t)j * c_in + i) * k;
                for (int p = 0; p < k; ++p)
                    if (row[p]) t.in_taps.push_back(j * k + p);
            }
            t.in_off[(size_t)i + 1] = (int32_t)t.in_taps.size();
        }
        return t;
    }

    static ConvTaps dense(int c_out, int c_in, int k) {
        std::vector<uint8_t> ones((size_t)c_out * c_in * k, 1);
        return build(ones.data(), c_out, c_in, k);
    }
};

namespace kern {

// One output row: y[j, 0..L) = bias + sum over active taps of w * shifted x.
// Accumulation order per element is input channel then tap position.
inline void conv_row_forward(float* __restrict yj, const float* __restrict x,
                             const float* __restrict w, float bias,
                             const ConvTaps& taps, int j, int L) {
    std::fill(yj, yj + L, bias);
    const int pad = pad_left_of(taps.k);
    const int64_t wbase = (int64_t)j * taps.c_in * taps.k;
    for (int32_t a = taps.out_off[(size_t)j]; a < taps.out_off[(size_t)j + 1]; ++a) {
        const int32_t ip = taps.out_taps[(size_t)a];
        const int i = ip / taps.k, p = ip % taps.k;
        const float wv = w[wbase + ip];
        const int t0 = std::max(0, pad - p);
        const int t1 = std::min(L, L + pad - p);
        if (t1 > t0)
            axpy(wv, x + (int64_t)i * L + (t0 + p - pad), yj + t0, t1 - t0);
    }
}

// One input-gradient row: gx[i, 0..L) += sum over taps of w * shifted go.
inline void conv_row_backward_x(float* __restrict gxi, const float* __restrict go,
                                const float* __restrict w, const ConvTaps& taps,
                                int i, int L) {
    const int pad = pad_left_of(taps.k);
    for (int32_t a = taps.in_off[(size_t)i]; a < taps.in_off[(size_t)i + 1]; ++a) {
        const int32_t jp = taps.in_taps[(size_t)a];
        const int j = jp / taps.k, p = jp % taps.k;
        const float wv = w[((int64_t)j * taps.c_in + i) * taps.k + p];
        const int s0 = std::max(0, p - pad);
        const int s1 = std::min(L, L + p - pad);
        if (s1 > s0)
            axpy(wv, go + (int64_t)j * L + (s0 - p + pad), gxi + s0, s1 - s0);
    }
}

// Weight/bias gradients for one output channel of one instance, accumulated
// into gw/gb. Covers only the taps listed (dense taps give the full kernel
// gradient regardless of the mask).
inline void conv_row_backward_w(float* __restrict gw, float* __restrict gb,
                                const float* __restrict go, const float* __restrict x,
                                const ConvTaps& taps, int j, int L) {
    const int pad = pad_left_of(taps.k);
    const float* goj = go + (int64_t)j * L;
    const int64_t wbase = (int64_t)j * taps.c_in * taps.k;
    for (int32_t a = taps.out_off[(size_t)j]; a < taps.out_off[(size_t)j + 1]; ++a) {
        const int32_t ip = taps.out_taps[(size_t)a];
        const int i = ip / taps.k, p = ip % taps.k;
        const int t0 = std::max(0, pad - p);
        const int t1 = std::min(L, L + pad - p);
        if (t1 > t0)
            gw[wbase + ip] += dot(goj + t0, x + (int64_t)i * L + (t0 + p - pad), t1 - t0);
    }
    if (gb) {
        float s = 0.f;
        for (int t = 0; t < L; ++t) s += goj[t];
        *gb += s;
    }
}

}  // namespace kern

// ---------------------------------------------------------------------------
// Spec-level single-instance convolution ops.

/// O[j,t] = bias[j] + sum_{i,p} w[j,i,p] * x[i, t+p-pad]; zero padding,
/// stride 1, output length equals input length.
inline Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& bias) {
    check(x.ndim() == 2, errc::shape, "conv1d: x must be [c_in, L], got " + shape_str(x.shape));
    check(w.ndim() == 3, errc::shape, "conv1d: w must be [c_out, c_in, k], got " + shape_str(w.shape));
    const int c_in = x.dim(0), L = x.dim(1);
    const int c_out = w.dim(0), k = w.dim(2);
    check(w.dim(1) == c_in, errc::shape,
          "conv1d: x has " + std::to_string(c_in) + " channels but w expects " +
              std::to_string(w.dim(1)));
    check((int)bias.size() == c_out, errc::shape, "conv1d: bias length must equal c_out");
    ConvTaps taps = ConvTaps::dense(c_out, c_in, k);
    Tensor y({c_out, L});
    for (int j = 0; j < c_out; ++j)
        kern::conv_row_forward(y.ptr() + (int64_t)j * L, x.ptr(), w.ptr(), bias.ptr()[j], taps, j, L);
    return y;
}

/// Reverse-mode of conv1d_forward: returns (grad_x, grad_w, grad_bias).
inline std::tuple<Tensor, Tensor, Tensor> conv1d_backward(const Tensor& grad_out,
                                                          const Tensor& x, const Tensor& w) {
    check(x.ndim() == 2 && w.ndim() == 3, errc::shape, "conv1d_backward: bad ranks");
    const int c_in = x.dim(0), L = x.dim(1);
    const int c_out = w.dim(0), k = w.dim(2);
    check(w.dim(1) == c_in, errc::shape, "conv1d_backward: channel mismatch");
    check(grad_out.ndim() == 2 && grad_out.dim(0) == c_out && grad_out.dim(1) == L, errc::shape,
          "conv1d_backward: grad_out must be [c_out, L]");
    ConvTaps taps = ConvTaps::dense(c_out, c_in, k);
    Tensor gx({c_in, L}), gw({c_out, c_in, k}), gb({c_out});
    for (int i = 0; i < c_in; ++i)
        kern::conv_row_backward_x(gx.ptr() + (int64_t)i * L, grad_out.ptr(), w.ptr(), taps, i, L);
    for (int j = 0; j < c_out; ++j)
        kern::conv_row_backward_w(gw.ptr(), gb.ptr() + j, grad_out.ptr(), x.ptr(), taps, j, L);
    return {std::move(gx), std::move(gw), std::move(gb)};
}

// ---------------------------------------------------------------------------
// Batched convolution used by the model layers. Batch tensors are [B, C, L].

inline Tensor conv1d_forward_batch(const Tensor& x, const Tensor& w, const Tensor& bias,
                                   const ConvTaps& taps) {
    const int B = x.dim(0), L = x.dim(2);
    const int c_out = taps.c_out;
    Tensor y({B, c_out, L});
    const int64_t xstride = (int64_t)taps.c_in * L, ystride = (int64_t)c_out * L;
    parallel_for((int64_t)B * c_out, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const int b = (int)(r / c_out), j = (int)(r % c_out);
            kern::conv_row_forward(y.ptr() + b * ystride + (int64_t)j * L,
                                   x.ptr() + b * xstride, w.ptr(), bias.ptr()[j], taps, j, L);
        }
    });
    return y;
}

/// grad_x for a batch; does not touch weight gradients.
inline Tensor conv1d_backward_x_batch(const Tensor& grad_out, const Tensor& w,
                                      const ConvTaps& taps, int L) {
    const int B = grad_out.dim(0);
    Tensor gx({B, taps.c_in, L});
    const int64_t gostride = (int64_t)taps.c_out * L, gxstride = (int64_t)taps.c_in * L;
    parallel_for((int64_t)B * taps.c_in, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const int b = (int)(r / taps.c_in), i = (int)(r % taps.c_in);
            kern::conv_row_backward_x(gx.ptr() + b * gxstride + (int64_t)i * L,
                                      grad_out.ptr() + b * gostride, w.ptr(), taps, i, L);
        }
    });
    return gx;
}

/// Accumulates weight/bias gradients over the whole batch (instance order is
/// fixed, so results are thread-count independent).
inline void conv1d_backward_w_batch(Tensor& grad_w, Tensor& grad_bias, const Tensor& grad_out,
                                    const Tensor& x, const ConvTaps& taps) {
    const int B = x.dim(0), L = x.dim(2);
    const int64_t xstride = (int64_t)taps.c_in * L, gostride = (int64_t)taps.c_out * L;
    parallel_for(taps.c_out, [&](int64_t j0, int64_t j1) {
        for (int64_t j = j0; j < j1; ++j)
            for (int b = 0; b < B; ++b)
                kern::conv_row_backward_w(grad_w.ptr(), grad_bias.ptr() + j,
                                          grad_out.ptr() + b * gostride, x.ptr() + b * xstride,
                                          taps, (int)j, L);
    });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearity.

inline Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (float& v : y.data) v = v > 0.f ? v : 0.f;
    return y;
}

/// In-place ReLU that records the pass-through gate for the backward pass.
inline void relu_forward_inplace(Tensor& x, std::vector<uint8_t>* gate) {
    if (gate) gate->assign((size_t)x.size(), 0);
    for (int64_t i = 0; i < x.size(); ++i) {
        if (x.data[(size_t)i] > 0.f) {
            if (gate) (*gate)[(size_t)i] = 1;
        } else {
            x.data[(size_t)i] = 0.f;
        }
    }
}

inline void relu_backward_inplace(Tensor& grad, const std::vector<uint8_t>& gate) {
    check((size_t)grad.size() == gate.size(), errc::shape, "relu backward: gate size mismatch");
    for (int64_t i = 0; i < grad.size(); ++i)
        if (!gate[(size_t)i]) grad.data[(size_t)i] = 0.f;
}

// ---------------------------------------------------------------------------
// Batch normalization over [B, C, L]: statistics per channel across B and L.

struct BatchNormState {
    Tensor running_mean, running_var;
    float momentum = 0.1f;
    float eps = 1e-5f;

    explicit BatchNormState(int channels = 0)
        : running_mean({channels}, 0.f), running_var({channels}, 1.f) {}
};

struct BatchNormCache {
    Tensor x_hat;                // normalized input
    std::vector<float> inv_std;  // per channel
};

inline Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                BatchNormState& st, bool training, BatchNormCache* cache) {
    check(x.ndim() == 3, errc::shape, "batchnorm: x must be [B, C, L]");
    const int B = x.dim(0), C = x.dim(1), L = x.dim(2);
    check((int)gamma.size() == C && (int)beta.size() == C, errc::shape, "batchnorm: affine size");
    Tensor y({B, C, L});
    if (cache) {
        cache->x_hat = Tensor({B, C, L});
        cache->inv_std.assign((size_t)C, 0.f);
    }
    const int64_t n = (int64_t)B * L;
    for (int c = 0; c < C; ++c) {
        float mean, var;
        if (training) {
            float s = 0.f;
            for (int b = 0; b < B; ++b) {
                const float* row = x.ptr() + ((int64_t)b * C + c) * L;
                for (int t = 0; t < L; ++t) s += row[t];
            }
            mean = s / (float)n;
            float sq = 0.f;
            for (int b = 0; b < B; ++b) {
                const float* row = x.ptr() + ((int64_t)b * C + c) * L;
                for (int t = 0; t < L; ++t) {
                    const float d = row[t] - mean;
                    sq += d * d;
                }
            }
            var = sq / (float)n;
            const float unbiased = n > 1 ? sq / (float)(n - 1) : var;
            st.running_mean.data[(size_t)c] =
                (1.f - st.momentum) * st.running_mean.data[(size_t)c] + st.momentum * mean;
            st.running_var.data[(size_t)c] =
                (1.f - st.momentum) * st.running_var.data[(size_t)c] + st.momentum * unbiased;
        } else {
            mean = st.running_mean.data[(size_t)c];
            var = st.running_var.data[(size_t)c];
        }
        const float inv = 1.f / std::sqrt(var + st.eps);
        const float g = gamma.data[(size_t)c], bt = beta.data[(size_t)c];
        if (cache) cache->inv_std[(size_t)c] = inv;
        for (int b = 0; b < B; ++b) {
            const float* row = x.ptr() + ((int64_t)b * C + c) * L;
            float* yrow = y.ptr() + ((int64_t)b * C + c) * L;
            float* hrow = cache ? cache->x_hat.ptr() + ((int64_t)b * C + c) * L : nullptr;
            for (int t = 0; t < L; ++t) {
                const float h = (row[t] - mean) * inv;
                if (hrow) hrow[t] = h;
                yrow[t] = g * h + bt;
            }
        }
    }
    return y;
}

/// Training-mode backward; accumulates into grad_gamma/grad_beta and returns
/// grad_x.
inline Tensor batchnorm_backward(const Tensor& grad_y, const Tensor& gamma,
                                 const BatchNormCache& cache, Tensor& grad_gamma,
                                 Tensor& grad_beta) {
    const int B = grad_y.dim(0), C = grad_y.dim(1), L = grad_y.dim(2);
    Tensor gx({B, C, L});
    const float n = (float)((int64_t)B * L);
    for (int c = 0; c < C; ++c) {
        float sum_gy = 0.f, sum_gy_h = 0.f;
        for (int b = 0; b < B; ++b) {
            const float* gyr = grad_y.ptr() + ((int64_t)b * C + c) * L;
            const float* hr = cache.x_hat.ptr() + ((int64_t)b * C + c) * L;
            for (int t = 0; t < L; ++t) {
                sum_gy += gyr[t];
                sum_gy_h += gyr[t] * hr[t];
            }
        }
        grad_gamma.data[(size_t)c] += sum_gy_h;
        grad_beta.data[(size_t)c] += sum_gy;
        const float g = gamma.data[(size_t)c];
        const float inv = cache.inv_std[(size_t)c];
        const float mean_gy = sum_gy / n, mean_gy_h = sum_gy_h / n;
        for (int b = 0; b < B; ++b) {
            const float* gyr = grad_y.ptr() + ((int64_t)b * C + c) * L;
            const float* hr = cache.x_hat.ptr() + ((int64_t)b * C + c) * L;
            float* gxr = gx.ptr() + ((int64_t)b * C + c) * L;
            for (int t = 0; t < L; ++t)
                gxr[t] = g * inv * (gyr[t] - mean_gy - hr[t] * mean_gy_h);
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Adaptive average pooling: partitions length L into out_len contiguous bins
// of near-equal size (bin t covers [floor(t*L/out), ceil((t+1)*L/out))).

inline void pool_bounds(int t, int L, int out_len, int& lo, int& hi) {
    lo = (int)(((int64_t)t * L) / out_len);
    hi = (int)(((int64_t)(t + 1) * L + out_len - 1) / out_len);
}

inline Tensor adaptive_avg_pool1d(const Tensor& x, int out_len) {
    check(x.ndim() == 2 || x.ndim() == 3, errc::shape, "pool: x must be [C, L] or [B, C, L]");
    const int L = x.dim(x.ndim() - 1);
    check(out_len >= 1, errc::shape, "pool: out_len must be >= 1");
    check(out_len <= L, errc::shape,
          "pool: out_len " + std::to_string(out_len) + " exceeds input length " + std::to_string(L));
    const int64_t rows = x.size() / L;
    std::vector<int> shape = x.shape;
    shape.back() = out_len;
    Tensor y(shape);
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = x.ptr() + r * L;
        float* yr = y.ptr() + r * out_len;
        for (int t = 0; t < out_len; ++t) {
            int lo, hi;
            pool_bounds(t, L, out_len, lo, hi);
            float s = 0.f;
            for (int u = lo; u < hi; ++u) s += xr[u];
            yr[t] = s / (float)(hi - lo);
        }
    }
    return y;
}

inline Tensor adaptive_avg_pool1d_backward(const Tensor& grad_out, int L) {
    const int out_len = grad_out.dim(grad_out.ndim() - 1);
    const int64_t rows = grad_out.size() / out_len;
    std::vector<int> shape = grad_out.shape;
    shape.back() = L;
    Tensor gx(shape);
    for (int64_t r = 0; r < rows; ++r) {
        const float* gr = grad_out.ptr() + r * out_len;
        float* gxr = gx.ptr() + r * L;
        for (int t = 0; t < out_len; ++t) {
            int lo, hi;
            pool_bounds(t, L, out_len, lo, hi);
            const float share = gr[t] / (float)(hi - lo);
            for (int u = lo; u < hi; ++u) gxr[u] += share;
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Cross-entropy on raw logits, log-sum-exp stabilized.

inline float cross_entropy(const Tensor& logits, int label) {
    const int c = (int)logits.size();
    check(label >= 0 && label < c, errc::shape,
          "cross_entropy: label " + std::to_string(label) + " out of range [0, " +
              std::to_string(c) + ")");
    float mx = logits.data[0];
    for (float v : logits.data) mx = std::max(mx, v);
    float s = 0.f;
    for (float v : logits.data) s += std::exp(v - mx);
    return (std::log(s) + mx) - logits.data[(size_t)label];
}

/// d(cross_entropy)/d(logits) = softmax(logits) - onehot(label).
inline Tensor cross_entropy_backward(const Tensor& logits, int label) {
    const int c = (int)logits.size();
    Tensor g({c});
    float mx = logits.data[0];
    for (float v : logits.data) mx = std::max(mx, v);
    float s = 0.f;
    for (int i = 0; i < c; ++i) {
        g.data[(size_t)i] = std::exp(logits.data[(size_t)i] - mx);
        s += g.data[(size_t)i];
    }
    for (int i = 0; i < c; ++i) g.data[(size_t)i] /= s;
    g.data[(size_t)label] -= 1.f;
    return g;
}

}  // namespace dsn
