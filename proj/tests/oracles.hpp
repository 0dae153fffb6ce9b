// Test-side reference implementations, kept independent of the library's
// compute paths: a naive double-precision convolution, a finite-difference
// gradient checker, exhaustive subset enumeration for exploration spaces, and
// a DFT-magnitude nearest-centroid classifier.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "dsn/data.hpp"
#include "dsn/model.hpp"
#include "dsn/tensor.hpp"

namespace oracle {

// O[j,t] = bias[j] + sum_{i,p} w[j,i,p] * xpad[i, t+p], zero padding
// floor(k/2) left. Double precision, explicit padded buffer.
inline dsn::Tensor conv1d(const dsn::Tensor& x, const dsn::Tensor& w, const dsn::Tensor& bias) {
    const int c_in = x.dim(0), L = x.dim(1);
    const int c_out = w.dim(0), k = w.dim(2);
    const int pad = k / 2;
    const int Lp = L + k - 1;
    std::vector<double> xpad((size_t)c_in * Lp, 0.0);
    for (int i = 0; i < c_in; ++i)
        for (int t = 0; t < L; ++t) xpad[(size_t)i * Lp + pad + t] = x.at(i, t);
    dsn::Tensor y({c_out, L});
    for (int j = 0; j < c_out; ++j)
        for (int t = 0; t < L; ++t) {
            double acc = bias.data[(size_t)j];
            for (int i = 0; i < c_in; ++i)
                for (int p = 0; p < k; ++p)
                    acc += (double)w.at(j, i, p) * xpad[(size_t)i * Lp + t + p];
            y.at(j, t) = (float)acc;
        }
    return y;
}

// Finite-difference comparison accumulator. The error of one gradient tensor
// is its largest |analytic - fd| relative to the gradient's own magnitude
// scale, the standard way to compare float32 gradients (a strict per-entry
// ratio is meaningless on near-zero entries, where the quotient is pure
// roundoff).
struct FdReport {
    double max_diff = 0.0;
    double max_mag = 0.0;
    int64_t checked = 0;
    int64_t skipped = 0;  // coordinates rejected by the h/2 consistency probe

    void merge(const FdReport& o) {
        max_diff = std::max(max_diff, o.max_diff);
        max_mag = std::max(max_mag, o.max_mag);
        checked += o.checked;
        skipped += o.skipped;
    }
    double max_rel_err() const { return max_diff / std::max(max_mag, 0.01); }
};

// Central finite differences of `loss` with respect to `buf`, compared
// against `analytic`. Coordinates where the h and h/2 quotients disagree by
// more than 20% sit on a kink (ReLU) and are skipped.
inline FdReport fd_check(float* buf, int64_t n, const double* analytic,
                         const std::function<double()>& loss, double h = 1e-3) {
    FdReport rep;
    for (int64_t i = 0; i < n; ++i) {
        const float keep = buf[i];
        auto quotient = [&](double step) {
            buf[i] = (float)((double)keep + step);
            const double lp = loss();
            buf[i] = (float)((double)keep - step);
            const double lm = loss();
            buf[i] = keep;
            return (lp - lm) / (2.0 * step);
        };
        const double g1 = quotient(h);
        const double g2 = quotient(h / 2.0);
        if (std::abs(g1 - g2) > 0.2 * std::max({std::abs(g1), std::abs(g2), 0.05})) {
            ++rep.skipped;
            continue;
        }
        rep.max_diff = std::max(rep.max_diff, std::abs(analytic[i] - g1));
        rep.max_mag = std::max({rep.max_mag, std::abs(analytic[i]), std::abs(g1)});
        ++rep.checked;
    }
    return rep;
}

// Staged re-run of the DSN forward pass over the public layer objects. Used
// by the end-to-end FD check: finite differences near a ReLU kink measure the
// symmetric subgradient rather than the one-sided derivative, so evaluations
// record the sign pattern of every ReLU input and coordinates whose pattern
// changes under perturbation are excluded. `margin` reports the smallest
// |ReLU input| so the test can pick a well-conditioned base point.
struct StagedDsn {
    dsn::Tensor x;
    std::vector<int> labels;

    double loss(dsn::DsnModel model, uint64_t* sig = nullptr, float* margin = nullptr) const {
        dsn::Tensor a = x;
        auto relu_stage = [&](dsn::Tensor& t) {
            for (int64_t i = 0; i < t.size(); ++i) {
                const float v = t.data[(size_t)i];
                if (margin) *margin = std::min(*margin, std::fabs(v));
                if (sig) *sig = (*sig ^ (v > 0.f ? 0x9E3779B9ull : 0x1ull)) * 0x100000001B3ull;
                t.data[(size_t)i] = v > 0.f ? v : 0.f;
            }
        };
        if (margin) *margin = std::numeric_limits<float>::max();
        for (auto& mod : model.modules) {
            a = mod.sparse.forward(a, true);
            a = mod.bn1.forward(a, true);
            relu_stage(a);
            a = mod.pw.forward(a, true);
            a = mod.bn2.forward(a, true);
            relu_stage(a);
        }
        a = model.final_sparse.forward(a, true);
        a = model.final_bn.forward(a, true);
        relu_stage(a);
        a = dsn::adaptive_avg_pool1d(a, model.cfg.pool_mid_len);
        a = dsn::adaptive_avg_pool1d(a, 1);
        a = model.classifier.forward(a, true);
        const int B = x.dim(0), c = model.cfg.num_classes;
        double s = 0.0;
        for (int b = 0; b < B; ++b) {
            dsn::Tensor row;
            row.shape = {c};
            row.data.assign(a.ptr() + (int64_t)b * c, a.ptr() + (int64_t)(b + 1) * c);
            s += dsn::cross_entropy(row, labels[(size_t)b]);
        }
        return s / B;
    }
};

// Central finite differences that skip coordinates whose perturbation flips
// any ReLU gate (detected exactly via the staged signature).
inline FdReport fd_check_gated(float* buf, int64_t n, const double* analytic,
                               const std::function<double(uint64_t*)>& loss, uint64_t base_sig,
                               double h = 1e-3) {
    FdReport rep;
    for (int64_t i = 0; i < n; ++i) {
        const float keep = buf[i];
        bool flipped = false;
        auto quotient = [&](double step) {
            uint64_t sp = 0, sm = 0;
            buf[i] = (float)((double)keep + step);
            const double lp = loss(&sp);
            buf[i] = (float)((double)keep - step);
            const double lm = loss(&sm);
            buf[i] = keep;
            if (sp != base_sig || sm != base_sig) flipped = true;
            return (lp - lm) / (2.0 * step);
        };
        const double g = quotient(h);
        if (flipped) {
            ++rep.skipped;
            continue;
        }
        rep.max_diff = std::max(rep.max_diff, std::abs(analytic[i] - g));
        rep.max_mag = std::max({rep.max_mag, std::abs(analytic[i]), std::abs(g)});
        ++rep.checked;
    }
    return rep;
}

// Number of n-bit masks with exactly `active` bits set, by brute force.
inline int64_t count_subsets(int bits, int active) {
    int64_t count = 0;
    for (uint64_t m = 0; m < (1ull << bits); ++m)
        if (__builtin_popcountll(m) == active) ++count;
    return count;
}

// Nearest-centroid classification on DFT magnitude spectra (DC excluded);
// phase-invariant, so class frequency structure is what it measures.
inline std::vector<double> dft_magnitude(const float* x, int n) {
    std::vector<double> mag;
    for (int f = 1; f <= n / 2; ++f) {
        double re = 0.0, im = 0.0;
        for (int t = 0; t < n; ++t) {
            const double a = -2.0 * std::numbers::pi * f * t / n;
            re += x[t] * std::cos(a);
            im += x[t] * std::sin(a);
        }
        mag.push_back(std::sqrt(re * re + im * im));
    }
    return mag;
}

inline double dft_centroid_accuracy(const dsn::TsDataset& train, const dsn::TsDataset& test) {
    const int n = train.length, c = train.num_classes;
    const int nf = n / 2;
    std::vector<std::vector<double>> centroid((size_t)c, std::vector<double>((size_t)nf, 0.0));
    std::vector<int64_t> counts((size_t)c, 0);
    for (int i = 0; i < train.size(); ++i) {
        const auto mag = dft_magnitude(train.instances[(size_t)i].ptr(), n);
        const int y = train.labels[(size_t)i];
        for (int f = 0; f < nf; ++f) centroid[(size_t)y][(size_t)f] += mag[(size_t)f];
        ++counts[(size_t)y];
    }
    for (int y = 0; y < c; ++y)
        for (int f = 0; f < nf; ++f) centroid[(size_t)y][(size_t)f] /= (double)counts[(size_t)y];
    int correct = 0;
    for (int i = 0; i < test.size(); ++i) {
        const auto mag = dft_magnitude(test.instances[(size_t)i].ptr(), n);
        int best = 0;
        double best_d = 0.0;
        for (int y = 0; y < c; ++y) {
            double d = 0.0;
            for (int f = 0; f < nf; ++f) {
                const double diff = mag[(size_t)f] - centroid[(size_t)y][(size_t)f];
                d += diff * diff;
            }
            if (y == 0 || d < best_d) {
                best_d = d;
                best = y;
            }
        }
        if (best == test.labels[(size_t)i]) ++correct;
    }
    return (double)correct / (double)test.size();
}

}  // namespace oracle
