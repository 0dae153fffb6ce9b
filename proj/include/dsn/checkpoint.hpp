#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dsn/model.hpp"

namespace dsn {

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
inline uint32_t crc32(const uint8_t* data, size_t n) {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int b = 0; b < 8; ++b) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

namespace detail {

struct ByteWriter {
    std::vector<uint8_t> buf;
    void u8(uint8_t v) { buf.push_back(v); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back((uint8_t)(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back((uint8_t)(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void floats(const Tensor& t) {
        for (float v : t.data) f32(v);
    }
};

struct ByteReader {
    const uint8_t* p;
    const uint8_t* end;
    void need(size_t n) const {
        check((size_t)(end - p) >= n, errc::checkpoint, "checkpoint: truncated payload");
    }
    uint8_t u8() {
        need(1);
        return *p++;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= (uint32_t)p[i] << (8 * i);
        p += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= (uint64_t)p[i] << (8 * i);
        p += 8;
        return v;
    }
    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void floats(Tensor& t) {
        for (float& v : t.data) v = f32();
    }
};

inline void write_mask(ByteWriter& w, const KernelMask& m) {
    const size_t nbits = m.bits.size();
    uint8_t cur = 0;
    for (size_t i = 0; i < nbits; ++i) {
        if (m.bits[i]) cur |= (uint8_t)(1u << (i % 8));
        if (i % 8 == 7) {
            w.u8(cur);
            cur = 0;
        }
    }
    if (nbits % 8 != 0) w.u8(cur);
}

inline void read_mask(ByteReader& r, KernelMask& m) {
    const size_t nbits = m.bits.size();
    uint8_t cur = 0;
    for (size_t i = 0; i < nbits; ++i) {
        if (i % 8 == 0) cur = r.u8();
        m.bits[i] = (cur >> (i % 8)) & 1u;
    }
}

inline void write_bn(ByteWriter& w, const BatchNormLayer& b) {
    w.floats(b.gamma.value);
    w.floats(b.beta.value);
    w.floats(b.state.running_mean);
    w.floats(b.state.running_var);
}

inline void read_bn(ByteReader& r, BatchNormLayer& b) {
    r.floats(b.gamma.value);
    r.floats(b.beta.value);
    r.floats(b.state.running_mean);
    r.floats(b.state.running_var);
}

}  // namespace detail

/// Checkpoint layout, all little-endian, trailing CRC-32 of every preceding
/// byte:
///   "DSN1" | config fields | seed u64 | epoch u32
///   per sparse layer: dense f32 weights (row-major c_out,c_in,k), packed
///   mask bitset (LSB-first, padded to a byte)
///   dense parameters + normalization state in model traversal order
inline std::vector<uint8_t> serialize_model(const DsnModel& m, uint64_t seed, int epoch) {
    detail::ByteWriter w;
    w.buf.insert(w.buf.end(), {'D', 'S', 'N', '1'});
    const DsnConfig& c = m.cfg;
    w.u32((uint32_t)c.num_sparse_layers);
    w.u32((uint32_t)c.channels);
    w.u32((uint32_t)c.kernel_size);
    w.u32((uint32_t)c.groups);
    w.f32(c.sparsity);
    w.u32((uint32_t)c.num_classes);
    w.u32((uint32_t)c.input_variates);
    w.u32((uint32_t)c.pool_mid_len);
    w.u8(c.dense_mode ? 1 : 0);
    w.u64(seed);
    w.u32((uint32_t)epoch);
    for (const ConvLayer* l : m.sparse_layers()) {
        w.floats(l->weights.value);
        detail::write_mask(w, l->mask);
    }
    for (const auto& mod : m.modules) {
        w.floats(mod.sparse.bias.value);
        detail::write_bn(w, mod.bn1);
        w.floats(mod.pw.weights.value);
        w.floats(mod.pw.bias.value);
        detail::write_bn(w, mod.bn2);
    }
    w.floats(m.final_sparse.bias.value);
    detail::write_bn(w, m.final_bn);
    w.floats(m.classifier.weights.value);
    w.floats(m.classifier.bias.value);
    w.u32(crc32(w.buf.data(), w.buf.size()));
    return w.buf;
}

struct LoadedCheckpoint {
    DsnModel model;
    uint64_t seed = 0;
    int epoch = 0;
};

inline LoadedCheckpoint deserialize_model(const std::vector<uint8_t>& buf) {
    check(buf.size() >= 8, errc::checkpoint, "checkpoint: file too short");
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= (uint32_t)buf[buf.size() - 4 + (size_t)i] << (8 * i);
    check(crc32(buf.data(), buf.size() - 4) == stored, errc::checkpoint,
          "checkpoint: checksum mismatch (corrupted file)");
    detail::ByteReader r{buf.data(), buf.data() + buf.size() - 4};
    r.need(4);
    check(r.p[0] == 'D' && r.p[1] == 'S' && r.p[2] == 'N' && r.p[3] == '1', errc::checkpoint,
          "checkpoint: bad magic (not a DSN1 file)");
    r.p += 4;
    DsnConfig c;
    c.num_sparse_layers = (int)r.u32();
    c.channels = (int)r.u32();
    c.kernel_size = (int)r.u32();
    c.groups = (int)r.u32();
    c.sparsity = r.f32();
    c.num_classes = (int)r.u32();
    c.input_variates = (int)r.u32();
    c.pool_mid_len = (int)r.u32();
    c.dense_mode = r.u8() != 0;
    LoadedCheckpoint out;
    out.seed = r.u64();
    out.epoch = (int)r.u32();
    try {
        validate(c);
    } catch (const error& e) {
        fail(errc::checkpoint, std::string("checkpoint: invalid config: ") + e.what());
    }
    out.model = build_model(c, InitMode::sequential, Rng(0));
    for (ConvLayer* l : out.model.sparse_layers()) {
        r.floats(l->weights.value);
        detail::read_mask(r, l->mask);
        l->mark_topology_changed();
        l->taps();  // rebuild now; loaded models may be evaluated concurrently
    }
    for (auto& mod : out.model.modules) {
        r.floats(mod.sparse.bias.value);
        detail::read_bn(r, mod.bn1);
        r.floats(mod.pw.weights.value);
        r.floats(mod.pw.bias.value);
        detail::read_bn(r, mod.bn2);
    }
    r.floats(out.model.final_sparse.bias.value);
    detail::read_bn(r, out.model.final_bn);
    r.floats(out.model.classifier.weights.value);
    r.floats(out.model.classifier.bias.value);
    check(r.p == r.end, errc::checkpoint, "checkpoint: trailing bytes after payload");
    return out;
}

inline void save_checkpoint(const DsnModel& m, uint64_t seed, int epoch,
                            const std::string& path) {
    const std::vector<uint8_t> buf = serialize_model(m, seed, epoch);
    std::ofstream out(path, std::ios::binary);
    check(out.good(), errc::checkpoint, "cannot write checkpoint: " + path);
    out.write((const char*)buf.data(), (std::streamsize)buf.size());
    check(out.good(), errc::checkpoint, "checkpoint write failed: " + path);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), errc::checkpoint, "cannot open checkpoint: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(buf);
}

}  // namespace dsn
