#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "dsn/common.hpp"
#include "dsn/ops.hpp"
#include "dsn/optim.hpp"
#include "dsn/rng.hpp"
#include "dsn/tensor.hpp"
#include "dsn/topology.hpp"

namespace dsn {

/// Convolution layer whose forward pass uses weights ⊙ mask exactly: a
/// position with mask bit 0 contributes nothing regardless of its stored
/// value. 1x1 layers and the classifier are the same type with a full mask.
struct ConvLayer {
    Parameter weights;  // [c_out, c_in, k]
    Parameter bias;     // [c_out]
    KernelMask mask;
    SparsityConfig sparse_cfg;
    bool sparse = false;      // participates in topology evolution + eNRF reports
    bool dense_mode = false;  // full kernels, regions ignored

    Tensor dense_grad;  // full-kernel weight gradient, filled on demand

    static ConvLayer sparse_layer(int c_out, int c_in, const SparsityConfig& sc, InitMode mode,
                                  Rng mask_rng, bool dense_mode) {
        ConvLayer l;
        l.sparse = true;
        l.dense_mode = dense_mode;
        l.sparse_cfg = sc;
        l.weights = Parameter({c_out, c_in, sc.kernel_size});
        l.bias = Parameter({c_out});
        if (dense_mode) {
            validate(sc, c_out);
            l.mask = full_mask(c_out, c_in, sc.kernel_size);
        } else {
            l.mask = init_topology(c_out, c_in, sc, mode, mask_rng);
        }
        return l;
    }

    static ConvLayer pointwise(int c_out, int c_in) {
        ConvLayer l;
        l.weights = Parameter({c_out, c_in, 1});
        l.bias = Parameter({c_out});
        l.mask = full_mask(c_out, c_in, 1);
        return l;
    }

    int c_out() const { return mask.c_out; }
    int c_in() const { return mask.c_in; }
    int k() const { return mask.k; }

    void init_weights(Rng rng) {
        const float bound = 1.f / std::sqrt((float)(c_in() * k()));
        for (float& v : weights.value.data) v = rng.uniform(-bound, bound);
        bias.value.zero();
    }

    const ConvTaps& taps() const {
        if (taps_dirty_) {
            taps_ = ConvTaps::build(mask.bits.data(), mask.c_out, mask.c_in, mask.k);
            active_flat_ = taps_.flat_indices();
            taps_dirty_ = false;
        }
        return taps_;
    }

    const std::vector<int32_t>& active_indices() const {
        taps();
        return active_flat_;
    }

    void mark_topology_changed() { taps_dirty_ = true; }

    Tensor forward(const Tensor& x, bool training) {
        check(x.ndim() == 3 && x.dim(1) == c_in(), errc::shape,
              "conv layer: expected [B, " + std::to_string(c_in()) + ", L] input, got " +
                  shape_str(x.shape));
        Tensor y = conv1d_forward_batch(x, weights.value, bias.value, taps());
        if (training) cached_x_ = x;
        return y;
    }

    /// Accumulates weight/bias grads; returns grad wrt input when requested.
    /// dense_wgrad additionally fills dense_grad with the full-kernel weight
    /// gradient (mask ignored), used by gradient-based growth.
    Tensor backward(const Tensor& grad_y, bool dense_wgrad, bool need_grad_x) {
        const int L = cached_x_.dim(2);
        conv1d_backward_w_batch(weights.grad, bias.grad, grad_y, cached_x_, taps());
        if (dense_wgrad) {
            if (!dense_grad.same_shape(weights.value)) dense_grad = Tensor(weights.value.shape);
            dense_grad.zero();
            Tensor scratch_bias({c_out()});
            const ConvTaps full = ConvTaps::dense(c_out(), c_in(), k());
            conv1d_backward_w_batch(dense_grad, scratch_bias, grad_y, cached_x_, full);
        }
        if (!need_grad_x) return Tensor();
        return conv1d_backward_x_batch(grad_y, weights.value, taps(), L);
    }

    void drop_caches() { cached_x_ = Tensor(); }

private:
    mutable ConvTaps taps_;
    mutable std::vector<int32_t> active_flat_;
    mutable bool taps_dirty_ = true;
    Tensor cached_x_;
};

struct BatchNormLayer {
    Parameter gamma, beta;
    BatchNormState state;

    BatchNormLayer() = default;
    explicit BatchNormLayer(int channels) : gamma({channels}), beta({channels}), state(channels) {
        std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.f);
    }

    Tensor forward(const Tensor& x, bool training) {
        return batchnorm_forward(x, gamma.value, beta.value, state, training,
                                 training ? &cache_ : nullptr);
    }

    Tensor backward(const Tensor& grad_y) {
        return batchnorm_backward(grad_y, gamma.value, cache_, gamma.grad, beta.grad);
    }

private:
    BatchNormCache cache_;
};

/// Sparse conv -> BN -> ReLU -> 1x1 conv -> BN -> ReLU. The module's eNRF set
/// equals its sparse layer's set; the 1x1 stage adds nothing.
struct SparseCnnModule {
    ConvLayer sparse;
    BatchNormLayer bn1;
    ConvLayer pw;
    BatchNormLayer bn2;

    Tensor forward(Tensor x, bool training) {
        x = sparse.forward(x, training);
        x = bn1.forward(x, training);
        relu_forward_inplace(x, training ? &gate1_ : nullptr);
        x = pw.forward(x, training);
        x = bn2.forward(x, training);
        relu_forward_inplace(x, training ? &gate2_ : nullptr);
        return x;
    }

    Tensor backward(Tensor g, bool dense_wgrad, bool need_input_grad) {
        relu_backward_inplace(g, gate2_);
        g = bn2.backward(g);
        g = pw.backward(g, false, true);
        relu_backward_inplace(g, gate1_);
        g = bn1.backward(g);
        return sparse.backward(g, dense_wgrad, need_input_grad);
    }

private:
    std::vector<uint8_t> gate1_, gate2_;
};

struct DsnConfig {
    int num_sparse_layers = 4;  // sparse CNN modules + final sparse layer
    int channels = 141;
    int kernel_size = 39;
    int groups = 3;
    float sparsity = 0.8f;
    int num_classes = 2;
    int input_variates = 1;
    int pool_mid_len = 8;
    bool dense_mode = false;
};

inline void validate(const DsnConfig& c) {
    check(c.num_sparse_layers >= 2, errc::config,
          "model: num_sparse_layers must be >= 2 (one module plus the final layer)");
    check(c.channels >= 1 && c.channels % c.groups == 0, errc::config,
          "model: groups " + std::to_string(c.groups) + " must divide channels " +
              std::to_string(c.channels));
    check(c.num_classes >= 2, errc::config, "model: num_classes must be >= 2");
    check(c.input_variates >= 1, errc::config, "model: input_variates must be >= 1");
    check(c.pool_mid_len >= 1, errc::config, "model: pool_mid_len must be >= 1");
    SparsityConfig sc{c.sparsity, c.groups, c.kernel_size};
    validate(sc, c.channels);
}

/// Stacked architecture: (num_sparse_layers - 1) sparse CNN modules, one
/// final sparse layer, two adaptive average pools (n -> pool_mid_len -> 1)
/// and a 1x1 classifier.
struct DsnModel {
    DsnConfig cfg;
    std::vector<SparseCnnModule> modules;
    ConvLayer final_sparse;
    BatchNormLayer final_bn;
    ConvLayer classifier;

    Tensor forward(const Tensor& x, bool training) {
        check(x.ndim() == 3, errc::shape, "model: input must be [B, variates, length]");
        check(x.dim(1) == cfg.input_variates, errc::shape,
              "model: expected " + std::to_string(cfg.input_variates) + " variates, got " +
                  std::to_string(x.dim(1)));
        const int n = x.dim(2);
        check(n >= cfg.pool_mid_len, errc::shape,
              "model: input length " + std::to_string(n) + " is shorter than pool_mid_len " +
                  std::to_string(cfg.pool_mid_len));
        if (training) input_len_ = n;  // eval forwards stay mutation-free
        Tensor a = x;
        for (auto& m : modules) a = m.forward(std::move(a), training);
        a = final_sparse.forward(a, training);
        a = final_bn.forward(a, training);
        relu_forward_inplace(a, training ? &final_gate_ : nullptr);
        a = adaptive_avg_pool1d(a, cfg.pool_mid_len);
        a = adaptive_avg_pool1d(a, 1);
        a = classifier.forward(a, training);  // [B, classes, 1]
        Tensor logits;
        logits.shape = {a.dim(0), a.dim(1)};
        logits.data = std::move(a.data);
        return logits;
    }

    /// Accumulates parameter gradients from d(loss)/d(logits).
    void backward(const Tensor& grad_logits, bool dense_wgrad = false) {
        Tensor g;
        g.shape = {grad_logits.dim(0), grad_logits.dim(1), 1};
        g.data = grad_logits.data;
        g = classifier.backward(g, false, true);
        g = adaptive_avg_pool1d_backward(g, cfg.pool_mid_len);
        g = adaptive_avg_pool1d_backward(g, input_len_);
        relu_backward_inplace(g, final_gate_);
        g = final_bn.backward(g);
        g = final_sparse.backward(g, dense_wgrad, true);
        for (size_t i = modules.size(); i-- > 0;)
            g = modules[i].backward(std::move(g), dense_wgrad, i > 0);
    }

    std::vector<ConvLayer*> sparse_layers() {
        std::vector<ConvLayer*> out;
        for (auto& m : modules) out.push_back(&m.sparse);
        out.push_back(&final_sparse);
        return out;
    }
    std::vector<const ConvLayer*> sparse_layers() const {
        std::vector<const ConvLayer*> out;
        for (auto& m : modules) out.push_back(&m.sparse);
        out.push_back(&final_sparse);
        return out;
    }

    /// Visits every trainable parameter; `active` is non-null for masked
    /// sparse-conv weights and lists their active flat indices.
    void for_each_parameter(
        const std::function<void(Parameter&, const std::vector<int32_t>*)>& fn) {
        auto conv = [&](ConvLayer& l) {
            fn(l.weights, &l.active_indices());
            fn(l.bias, nullptr);
        };
        for (auto& m : modules) {
            conv(m.sparse);
            fn(m.bn1.gamma, nullptr);
            fn(m.bn1.beta, nullptr);
            conv(m.pw);
            fn(m.bn2.gamma, nullptr);
            fn(m.bn2.beta, nullptr);
        }
        conv(final_sparse);
        fn(final_bn.gamma, nullptr);
        fn(final_bn.beta, nullptr);
        conv(classifier);
    }

private:
    int input_len_ = 0;
    std::vector<uint8_t> final_gate_;
};

inline DsnModel build_model(const DsnConfig& cfg, InitMode init, Rng rng) {
    validate(cfg);
    DsnModel m;
    m.cfg = cfg;
    const SparsityConfig sc{cfg.sparsity, cfg.groups, cfg.kernel_size};
    const Rng mask_rng = rng.split("mask");
    const Rng weight_rng = rng.split("weights");
    int layer_idx = 0;
    auto next_sparse = [&](int c_in) {
        ConvLayer l = ConvLayer::sparse_layer(cfg.channels, c_in, sc, init,
                                              mask_rng.split((uint64_t)layer_idx), cfg.dense_mode);
        l.init_weights(weight_rng.split((uint64_t)layer_idx));
        ++layer_idx;
        return l;
    };
    auto next_pointwise = [&](int c_out, int c_in) {
        ConvLayer l = ConvLayer::pointwise(c_out, c_in);
        l.init_weights(weight_rng.split((uint64_t)layer_idx));
        ++layer_idx;
        return l;
    };

    int c_in = cfg.input_variates;
    for (int i = 0; i < cfg.num_sparse_layers - 1; ++i) {
        SparseCnnModule mod;
        mod.sparse = next_sparse(c_in);
        mod.bn1 = BatchNormLayer(cfg.channels);
        mod.pw = next_pointwise(cfg.channels, cfg.channels);
        mod.bn2 = BatchNormLayer(cfg.channels);
        m.modules.push_back(std::move(mod));
        c_in = cfg.channels;
    }
    m.final_sparse = next_sparse(c_in);
    m.final_bn = BatchNormLayer(cfg.channels);
    m.classifier = next_pointwise(cfg.num_classes, cfg.channels);
    // Build tap lists now so read-only forwards can run concurrently.
    for (auto& mod : m.modules) {
        mod.sparse.taps();
        mod.pw.taps();
    }
    m.final_sparse.taps();
    m.classifier.taps();
    return m;
}

// ---------------------------------------------------------------------------
// Effective neighbour receptive fields.

/// Span between first and last activated weight of one kernel row; 0 when the
/// row is empty.
inline int enrf_size(const uint8_t* row, int k) {
    int first = -1, last = -1;
    for (int p = 0; p < k; ++p)
        if (row[p]) {
            if (first < 0) first = p;
            last = p;
        }
    return first < 0 ? 0 : last - first + 1;
}

inline int enrf_size(const std::vector<uint8_t>& row) {
    return enrf_size(row.data(), (int)row.size());
}

/// Histogram of eNRF sizes over all c_in*c_out kernels; index = size in
/// [0, k].
inline std::vector<int64_t> layer_enrf_histogram(const ConvLayer& layer) {
    const KernelMask& m = layer.mask;
    std::vector<int64_t> hist((size_t)m.k + 1, 0);
    for (int j = 0; j < m.c_out; ++j)
        for (int i = 0; i < m.c_in; ++i)
            ++hist[(size_t)enrf_size(m.bits.data() + m.flat(j, i, 0), m.k)];
    return hist;
}

inline std::set<int> enrf_size_set(const ConvLayer& layer) {
    std::set<int> out;
    const auto hist = layer_enrf_histogram(layer);
    for (size_t s = 0; s < hist.size(); ++s)
        if (hist[s] > 0) out.insert((int)s);
    return out;
}

/// Receptive-field sizes reachable by stacking: { max(0, sum s_i - (len-1)) }.
inline std::set<int> stacked_rf_set(const std::vector<std::set<int>>& sets) {
    if (sets.empty()) return {};
    std::set<int> sums = {0};
    for (const auto& s : sets) {
        std::set<int> next;
        for (int a : sums)
            for (int b : s) next.insert(a + b);
        sums = std::move(next);
    }
    std::set<int> out;
    const int shift = (int)sets.size() - 1;
    for (int v : sums) out.insert(std::max(0, v - shift));
    return out;
}

/// eNRF sets along the module path (the stacked sparse CNN modules; the final
/// layer and classifier sit after the pools in the head).
inline std::vector<std::set<int>> module_enrf_sets(const DsnModel& m) {
    std::vector<std::set<int>> sets;
    for (const auto& mod : m.modules) sets.push_back(enrf_size_set(mod.sparse));
    return sets;
}

}  // namespace dsn
