#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dsn/common.hpp"
#include "dsn/rng.hpp"
#include "dsn/tensor.hpp"

namespace dsn {

/// Labeled equal-length time-series instances, each [variates, length].
struct TsDataset {
    std::vector<Tensor> instances;
    std::vector<int> labels;           // dense in [0, num_classes)
    std::vector<double> label_values;  // original label per class index
    int variates = 0;
    int length = 0;
    int num_classes = 0;
    std::string split;  // "train" or "test"

    int size() const { return (int)instances.size(); }
};

namespace detail {

inline double parse_number(std::string_view tok, const std::string& where) {
    double v = 0.0;
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(b, e, v);
    check(ec == std::errc() && p == e, errc::data,
          where + ": cannot parse number '" + std::string(tok) + "'");
    check(std::isfinite(v), errc::data, where + ": non-finite value '" + std::string(tok) + "'");
    return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line, std::string_view seps) {
    std::vector<std::string_view> out;
    size_t b = 0;
    while (b <= line.size()) {
        size_t e = line.find_first_of(seps, b);
        if (e == std::string_view::npos) e = line.size();
        std::string_view f = line.substr(b, e - b);
        while (!f.empty() && (f.front() == ' ' || f.front() == '\r')) f.remove_prefix(1);
        while (!f.empty() && (f.back() == ' ' || f.back() == '\r')) f.remove_suffix(1);
        if (!f.empty()) out.push_back(f);
        if (e == line.size()) break;
        b = e + 1;
    }
    return out;
}

inline void remap_labels(TsDataset& ds, const std::vector<double>& raw) {
    std::vector<double> uniq = raw;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    ds.label_values = uniq;
    ds.num_classes = (int)uniq.size();
    ds.labels.reserve(raw.size());
    for (double v : raw) {
        const auto it = std::lower_bound(uniq.begin(), uniq.end(), v);
        ds.labels.push_back((int)(it - uniq.begin()));
    }
}

}  // namespace detail

/// UCR-style univariate text file: one instance per line, label first, values
/// separated by tab or comma. Labels are remapped to 0..c-1 preserving their
/// sorted original order.
inline TsDataset load_ucr(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), errc::data, "cannot open dataset file: " + path);
    TsDataset ds;
    ds.variates = 1;
    std::vector<double> raw_labels;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto fields = detail::split_fields(line, "\t,");
        if (fields.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        check(fields.size() >= 2, errc::data, where + ": expected a label and at least one value");
        const int n = (int)fields.size() - 1;
        if (ds.length == 0)
            ds.length = n;
        else
            check(n == ds.length, errc::data,
                  where + ": expected " + std::to_string(ds.length) + " values, got " +
                      std::to_string(n));
        const double lbl = detail::parse_number(fields[0], where);
        check(std::abs(lbl - std::round(lbl)) < 1e-9, errc::data,
              where + ": label must be an integer");
        raw_labels.push_back(std::round(lbl));
        Tensor inst({1, n});
        for (int t = 0; t < n; ++t)
            inst.data[(size_t)t] = (float)detail::parse_number(fields[(size_t)t + 1], where);
        ds.instances.push_back(std::move(inst));
    }
    check(!ds.instances.empty(), errc::data, path + ": no instances");
    detail::remap_labels(ds, raw_labels);
    return ds;
}

/// Multivariate text format.
///   line 1:        TS3 <num_instances> <variates> <length> <classes>
///   per instance:  one integer label line in [0, classes), then <variates>
///                  lines of <length> comma-separated floats.
inline TsDataset load_ts3(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), errc::data, "cannot open dataset file: " + path);
    std::string line;
    check((bool)std::getline(in, line), errc::data, path + ": empty file");
    std::istringstream hdr(line);
    std::string magic;
    int64_t count = 0;
    int m = 0, n = 0, c = 0;
    hdr >> magic >> count >> m >> n >> c;
    check(!hdr.fail() && magic == "TS3", errc::data, path + ": bad TS3 header: '" + line + "'");
    check(count >= 1 && m >= 1 && n >= 1 && c >= 2, errc::data,
          path + ": TS3 header values out of range");
    TsDataset ds;
    ds.variates = m;
    ds.length = n;
    ds.num_classes = c;
    for (int cls = 0; cls < c; ++cls) ds.label_values.push_back((double)cls);
    for (int64_t idx = 0; idx < count; ++idx) {
        const std::string where = path + ": instance " + std::to_string(idx);
        check((bool)std::getline(in, line), errc::data, where + ": missing label line");
        const auto label_fields = detail::split_fields(line, " \t");
        check(label_fields.size() == 1, errc::data, where + ": expected a bare label line");
        const double lbl = detail::parse_number(label_fields[0], where);
        check(std::abs(lbl - std::round(lbl)) < 1e-9 && lbl >= 0 && lbl < c, errc::data,
              where + ": label out of range [0, " + std::to_string(c) + ")");
        ds.labels.push_back((int)std::round(lbl));
        Tensor inst({m, n});
        for (int v = 0; v < m; ++v) {
            check((bool)std::getline(in, line), errc::data,
                  where + ": missing variate row " + std::to_string(v));
            const auto fields = detail::split_fields(line, ",");
            check((int)fields.size() == n, errc::data,
                  where + ": variate " + std::to_string(v) + " has " +
                      std::to_string(fields.size()) + " values, expected " + std::to_string(n));
            for (int t = 0; t < n; ++t)
                inst.at(v, t) = (float)detail::parse_number(fields[(size_t)t], where);
        }
        ds.instances.push_back(std::move(inst));
    }
    while (std::getline(in, line))
        check(detail::split_fields(line, " \t,").empty(), errc::data,
              path + ": trailing content after declared instances");
    return ds;
}

inline void save_ts3(const TsDataset& ds, const std::string& path) {
    std::ofstream out(path);
    check(out.good(), errc::data, "cannot write dataset file: " + path);
    out << "TS3 " << ds.size() << " " << ds.variates << " " << ds.length << " " << ds.num_classes
        << "\n";
    char buf[64];
    for (int i = 0; i < ds.size(); ++i) {
        out << ds.labels[(size_t)i] << "\n";
        for (int v = 0; v < ds.variates; ++v) {
            for (int t = 0; t < ds.length; ++t) {
                std::snprintf(buf, sizeof buf, "%.9g", (double)ds.instances[(size_t)i].at(v, t));
                out << (t ? "," : "") << buf;
            }
            out << "\n";
        }
    }
    check(out.good(), errc::data, "write failed: " + path);
}

/// Sniffs the header; TS3 files start with "TS3 ", anything else is treated
/// as UCR text.
inline TsDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), errc::data, "cannot open dataset file: " + path);
    char head[4] = {0, 0, 0, 0};
    in.read(head, 4);
    in.close();
    if (head[0] == 'T' && head[1] == 'S' && head[2] == '3' && head[3] == ' ') return load_ts3(path);
    return load_ucr(path);
}

/// Per instance, per variate: subtract the mean, divide by the population
/// std. Constant series map to all-zeros (std guard 1e-8).
inline TsDataset z_normalize(TsDataset ds) {
    for (Tensor& inst : ds.instances) {
        const int m = inst.dim(0), n = inst.dim(1);
        for (int v = 0; v < m; ++v) {
            float* row = inst.ptr() + (int64_t)v * n;
            double mean = 0.0;
            for (int t = 0; t < n; ++t) mean += row[t];
            mean /= n;
            double var = 0.0;
            for (int t = 0; t < n; ++t) var += (row[t] - mean) * (row[t] - mean);
            const double std = std::sqrt(var / n);
            const double denom = std::max(std, 1e-8);
            for (int t = 0; t < n; ++t) row[t] = (float)((row[t] - mean) / denom);
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic multi-scale generator.

/// Each class pairs a base sinusoid frequency with a localized transient of a
/// class-specific width; phase, transient position, amplitude offset, mild
/// frequency warp and Gaussian noise vary per instance.
struct SynthSpec {
    int num_classes = 3;
    int train_per_class = 100;
    int test_per_class = 100;
    int length = 128;
    std::vector<double> base_freq = {3.0, 6.0, 12.0};   // cycles per window
    std::vector<double> transient_width = {6.0, 12.0, 24.0};
    double transient_amp = 1.5;
    double noise_sigma = 0.1;
    double warp = 0.05;    // relative frequency jitter
    double offset = 0.5;   // amplitude offset range
    uint64_t seed = 42;
};

inline void fill_defaults(SynthSpec& s) {
    if ((int)s.base_freq.size() != s.num_classes) {
        s.base_freq.clear();
        for (int c = 0; c < s.num_classes; ++c) s.base_freq.push_back(3.0 * (double)(1 << c));
    }
    if ((int)s.transient_width.size() != s.num_classes) {
        s.transient_width.clear();
        for (int c = 0; c < s.num_classes; ++c) s.transient_width.push_back(6.0 + 6.0 * c);
    }
}

inline void validate(const SynthSpec& s) {
    check(s.num_classes >= 2, errc::config, "synth: need at least 2 classes");
    check(s.train_per_class >= 1 && s.test_per_class >= 1, errc::config,
          "synth: instances per class must be >= 1");
    check(s.length >= 8, errc::config, "synth: length must be >= 8");
    check((int)s.base_freq.size() == s.num_classes &&
              (int)s.transient_width.size() == s.num_classes,
          errc::config, "synth: per-class parameter lists must match num_classes");
    for (int a = 0; a < s.num_classes; ++a)
        for (int b = a + 1; b < s.num_classes; ++b)
            check(s.base_freq[(size_t)a] != s.base_freq[(size_t)b] ||
                      s.transient_width[(size_t)a] != s.transient_width[(size_t)b],
                  errc::config, "synth: class-distinguishing parameters must be pairwise distinct");
}

namespace detail {
inline TsDataset gen_split(const SynthSpec& s, const std::string& tag, int per_class) {
    TsDataset ds;
    ds.split = tag;
    ds.variates = 1;
    ds.length = s.length;
    ds.num_classes = s.num_classes;
    for (int c = 0; c < s.num_classes; ++c) ds.label_values.push_back((double)c);
    Rng split_rng = Rng(s.seed).split(tag);
    const int n = s.length;
    for (int c = 0; c < s.num_classes; ++c) {
        Rng crng = split_rng.split((uint64_t)c);
        for (int i = 0; i < per_class; ++i) {
            Rng r = crng.split((uint64_t)i);
            const double phase = r.next_double() * 2.0 * std::numbers::pi;
            const double freq = s.base_freq[(size_t)c] * (1.0 + r.uniform((float)-s.warp, (float)s.warp));
            const double width = s.transient_width[(size_t)c];
            const int margin = std::min(n / 4, (int)std::ceil(width));
            const int pos = margin + (int)r.next_below(std::max<int64_t>(1, n - 2 * margin));
            const double off = r.uniform((float)-s.offset, (float)s.offset);
            Tensor inst({1, n});
            for (int t = 0; t < n; ++t) {
                const double base =
                    std::sin(2.0 * std::numbers::pi * freq * (double)t / (double)n + phase);
                const double d = ((double)t - pos) / (width / 2.0);
                const double bump = s.transient_amp * std::exp(-0.5 * d * d);
                const double noise = s.noise_sigma > 0 ? s.noise_sigma * r.normal() : 0.0;
                inst.data[(size_t)t] = (float)(base + bump + off + noise);
            }
            ds.instances.push_back(std::move(inst));
            ds.labels.push_back(c);
        }
    }
    return ds;
}
}  // namespace detail

/// Deterministic per seed; train and test use disjoint draw streams.
inline std::pair<TsDataset, TsDataset> gen_synth(SynthSpec spec) {
    fill_defaults(spec);
    validate(spec);
    return {detail::gen_split(spec, "train", spec.train_per_class),
            detail::gen_split(spec, "test", spec.test_per_class)};
}

}  // namespace dsn
