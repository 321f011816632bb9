#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "advlab/models.hpp"
#include "advlab/training.hpp"

namespace advlab {

// Versioned binary checkpoint container:
//   8-byte magic | u32 version | i32 t | 3 x f64 epoch stats
//   | spec block | u32 tensor count | tensors | u32 crc32 (whole file so far)
// All integers and doubles little-endian binary64/32; round trips are
// bit-exact.

inline constexpr char kCheckpointMagic[8] = {'A', 'D', 'V', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kCheckpointOldestSupported = 0;  // v0: identical layout, pre-release tag

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xffffffffu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

struct ByteWriter {
    std::vector<std::uint8_t> buf;
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void i32(std::int32_t v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
};

struct ByteReader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;
    void raw(void* p, std::size_t n) {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::int32_t i32() {
        std::int32_t v;
        raw(&v, 4);
        return v;
    }
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated string");
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

inline void write_spec(ByteWriter& w, const ModelSpec& spec) {
    w.u32(spec.kind == ModelKind::Mlp ? 0u : 1u);
    w.u32(static_cast<std::uint32_t>(spec.widths.size()));
    for (int v : spec.widths) w.i32(v);
    w.u32(static_cast<std::uint32_t>(spec.input_shape.size()));
    for (int v : spec.input_shape) w.i32(v);
    w.i32(spec.num_classes);
}

inline ModelSpec read_spec(ByteReader& r) {
    ModelSpec spec;
    spec.kind = r.u32() == 0u ? ModelKind::Mlp : ModelKind::SmallCnn;
    spec.widths.resize(r.u32());
    for (auto& v : spec.widths) v = r.i32();
    spec.input_shape.resize(r.u32());
    for (auto& v : spec.input_shape) v = r.i32();
    spec.num_classes = r.i32();
    spec.validate();
    return spec;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    detail::ByteWriter w;
    w.raw(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    w.i32(ckpt.t);
    w.i32(ckpt.stats.epoch);
    w.f64(ckpt.stats.mean_loss);
    w.f64(ckpt.stats.error);
    detail::write_spec(w, ckpt.params.spec);
    w.u32(static_cast<std::uint32_t>(ckpt.params.tensors.size()));
    for (const auto& [name, t] : ckpt.params.tensors) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) w.i32(d);
        for (double v : t.data) w.f64(v);
    }
    w.u32(detail::crc32(w.buf.data(), w.buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

// Loads and validates a checkpoint. `note` (optional) receives an upgrade
// message when an older supported version is read.
inline Checkpoint load_checkpoint(const std::string& path, std::string* note = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 16) throw std::runtime_error("checkpoint: file too short");

    const std::uint32_t stored_crc = detail::crc32(buf.data(), buf.size() - 4);
    std::uint32_t file_crc;
    std::memcpy(&file_crc, buf.data() + buf.size() - 4, 4);
    if (stored_crc != file_crc) throw std::runtime_error("checkpoint: checksum mismatch (corrupt file)");

    detail::ByteReader r{buf};
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw std::runtime_error("checkpoint: bad magic");
    const std::uint32_t version = r.u32();
    if (version > kCheckpointVersion || version < kCheckpointOldestSupported)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    if (version < kCheckpointVersion && note)
        *note = "loaded version " + std::to_string(version) + " checkpoint; current is " +
                std::to_string(kCheckpointVersion);

    Checkpoint ckpt;
    ckpt.t = r.i32();
    ckpt.stats.epoch = r.i32();
    ckpt.stats.mean_loss = r.f64();
    ckpt.stats.error = r.f64();
    ckpt.params.spec = detail::read_spec(r);
    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::string name = r.str();
        Shape shape(r.u32());
        for (auto& d : shape) d = r.i32();
        Tensor t(shape);
        for (auto& v : t.data) v = r.f64();
        ckpt.params.tensors.emplace(name, std::move(t));
    }
    for (const auto& [name, t] : ckpt.params.tensors)
        if (!t.all_finite()) throw std::runtime_error("checkpoint: non-finite parameter in '" + name + "'");
    return ckpt;
}

}  // namespace advlab
