#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dsn/common.hpp"

namespace dsn {

/// Dense row-major float32 array with shape metadata; the universal numeric
/// carrier of the library.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, float fill = 0.f) : shape(std::move(s)) {
        data.assign((size_t)count(shape), fill);
    }

    static Tensor of(std::vector<int> s, std::vector<float> values) {
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(values);
        check((int64_t)t.data.size() == count(t.shape), errc::shape,
              "tensor: data length " + std::to_string(t.data.size()) +
                  " does not match shape product " + std::to_string(count(t.shape)));
        return t;
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int64_t size() const { return (int64_t)data.size(); }
    int ndim() const { return (int)shape.size(); }
    int dim(int i) const { return shape[(size_t)i]; }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    float& at(int i, int j) { return data[(size_t)i * shape[1] + (size_t)j]; }
    float at(int i, int j) const { return data[(size_t)i * shape[1] + (size_t)j]; }
    float& at(int i, int j, int l) {
        return data[((size_t)i * shape[1] + (size_t)j) * shape[2] + (size_t)l];
    }
    float at(int i, int j, int l) const {
        return data[((size_t)i * shape[1] + (size_t)j) * shape[2] + (size_t)l];
    }

    void zero() { std::fill(data.begin(), data.end(), 0.f); }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace dsn
