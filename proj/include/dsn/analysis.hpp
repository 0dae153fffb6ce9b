#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "dsn/model.hpp"

namespace dsn {

/// Static resource accounting for one model: exact parameter counts (mask
/// popcount for sparse layers), forward-pass FLOPs for one instance, and
/// per-sparse-layer eNRF histograms.
struct ResourceReport {
    int64_t params_total = 0;
    std::vector<std::pair<std::string, int64_t>> params_per_layer;
    std::vector<int64_t> sparse_active;  // popcount per sparse layer
    int64_t flops_per_instance = 0;
    std::vector<int64_t> sparse_conv_flops;  // conv MAC FLOPs per sparse layer
    std::vector<std::vector<int64_t>> enrf_histograms;
    int input_len = 0;
};

/// Activated weights in a sparse layer + full weight counts everywhere else;
/// biases and normalization affine parameters are trainable and counted.
inline int64_t count_params(const DsnModel& m) {
    int64_t total = 0;
    auto conv = [&](const ConvLayer& l) { total += l.mask.popcount() + l.bias.value.size(); };
    auto bn = [&](const BatchNormLayer& b) { total += b.gamma.value.size() + b.beta.value.size(); };
    for (const auto& mod : m.modules) {
        conv(mod.sparse);
        bn(mod.bn1);
        conv(mod.pw);
        bn(mod.bn2);
    }
    conv(m.final_sparse);
    bn(m.final_bn);
    conv(m.classifier);
    return total;
}

namespace detail {
// 2 FLOPs per active weight per output step, plus one add per bias
// application.
inline int64_t conv_flops(const ConvLayer& l, int64_t out_len) {
    return 2 * l.mask.popcount() * out_len + (int64_t)l.c_out() * out_len;
}
inline int64_t conv_mac_flops(const ConvLayer& l, int64_t out_len) {
    return 2 * l.mask.popcount() * out_len;
}
}  // namespace detail

/// Inference cost of one forward pass on one instance of the given length.
/// Convolutions count 2*active*L (+ bias adds); normalization, nonlinearity
/// and pooling count one op per element.
inline int64_t count_flops(const DsnModel& m, int input_len) {
    check(input_len >= m.cfg.pool_mid_len, errc::config,
          "flops: input length is shorter than pool_mid_len");
    const int64_t L = input_len;
    const int64_t C = m.cfg.channels;
    int64_t total = 0;
    for (const auto& mod : m.modules) {
        total += detail::conv_flops(mod.sparse, L) + C * L;  // + bn1
        total += C * L;                                      // relu
        total += detail::conv_flops(mod.pw, L) + C * L;      // + bn2
        total += C * L;                                      // relu
    }
    total += detail::conv_flops(m.final_sparse, L) + C * L + C * L;
    total += C * L;                 // pool to pool_mid_len
    total += C * m.cfg.pool_mid_len;  // pool to 1
    total += detail::conv_flops(m.classifier, 1);
    return total;
}

inline ResourceReport analyze(const DsnModel& m, int input_len) {
    ResourceReport r;
    r.input_len = input_len;
    auto conv = [&](const ConvLayer& l, const std::string& name) {
        r.params_per_layer.emplace_back(name, l.mask.popcount() + l.bias.value.size());
    };
    auto bn = [&](const BatchNormLayer& b, const std::string& name) {
        r.params_per_layer.emplace_back(name, b.gamma.value.size() + b.beta.value.size());
    };
    for (size_t i = 0; i < m.modules.size(); ++i) {
        const std::string p = "module" + std::to_string(i) + ".";
        conv(m.modules[i].sparse, p + "sparse");
        bn(m.modules[i].bn1, p + "bn1");
        conv(m.modules[i].pw, p + "pointwise");
        bn(m.modules[i].bn2, p + "bn2");
    }
    conv(m.final_sparse, "final.sparse");
    bn(m.final_bn, "final.bn");
    conv(m.classifier, "classifier");
    r.params_total = count_params(m);
    r.flops_per_instance = count_flops(m, input_len);
    for (const ConvLayer* l : m.sparse_layers()) {
        r.sparse_active.push_back(l->mask.popcount());
        r.sparse_conv_flops.push_back(detail::conv_mac_flops(*l, input_len));
        r.enrf_histograms.push_back(layer_enrf_histogram(*l));
    }
    return r;
}

/// CSV rows `layer,enrf,count`, one per (sparse layer, eNRF size) with a
/// nonzero count; per-layer counts sum to c_in*c_out.
inline std::string topology_report_csv(const DsnModel& m) {
    std::ostringstream out;
    out << "layer,enrf,count\n";
    int li = 0;
    for (const ConvLayer* l : m.sparse_layers()) {
        const auto hist = layer_enrf_histogram(*l);
        for (size_t s = 0; s < hist.size(); ++s)
            if (hist[s] > 0) out << li << "," << s << "," << hist[s] << "\n";
        ++li;
    }
    return out.str();
}

/// One JSON object per sparse layer with its histogram map.
inline std::string topology_report_jsonl(const DsnModel& m) {
    std::ostringstream out;
    int li = 0;
    for (const ConvLayer* l : m.sparse_layers()) {
        const auto hist = layer_enrf_histogram(*l);
        out << "{\"layer\":" << li << ",\"histogram\":{";
        bool first = true;
        for (size_t s = 0; s < hist.size(); ++s)
            if (hist[s] > 0) {
                if (!first) out << ",";
                out << "\"" << s << "\":" << hist[s];
                first = false;
            }
        out << "}}\n";
        ++li;
    }
    return out.str();
}

}  // namespace dsn
