#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include <zlib.h>

#include "sefusion/model.hpp"

namespace sefusion {

// Binary layout, all integers little-endian:
//   "SEFN" | u32 version | u32 tensor count
//   per tensor: u16 name length | UTF-8 name | u8 rank | u32 extents... | f32 values...
//   u32 CRC-32 of every preceding byte

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'S', 'E', 'F', 'N'};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class CheckpointCorruptError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    void le(std::uint32_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return le(4); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::string str(std::size_t n) {
        auto s = take(n);
        return std::string(s.begin(), s.end());
    }

private:
    std::span<const std::uint8_t> take(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw CheckpointTruncatedError("checkpoint truncated");
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t le(int n) {
        auto s = take(static_cast<std::size_t>(n));
        std::uint32_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
        return v;
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    return static_cast<std::uint32_t>(crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace detail

struct CheckpointTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointTensor>& tensors) {
    detail::ByteWriter w;
    w.raw(std::string_view(kCheckpointMagic, 4));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        w.u16(static_cast<std::uint16_t>(t.name.size()));
        w.raw(t.name);
        w.u8(static_cast<std::uint8_t>(t.shape.size()));
        for (auto e : t.shape) w.u32(static_cast<std::uint32_t>(e));
        for (float v : t.values) w.f32(v);
    }
    const std::uint32_t crc = detail::crc32_of(w.bytes());
    w.u32(crc);
    return std::move(w.bytes());
}

inline std::vector<CheckpointTensor> decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        if (bytes.size() < 4) throw CheckpointTruncatedError("checkpoint truncated before magic bytes");
        throw CheckpointCorruptError("not a checkpoint: bad magic bytes");
    }
    detail::ByteReader r(bytes.subspan(4));
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) +
                                     " (expected " + std::to_string(kCheckpointVersion) + ")");
    const std::uint32_t count = r.u32();
    std::vector<CheckpointTensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        t.name = r.str(r.u16());
        const std::uint8_t rank = r.u8();
        for (std::uint8_t d = 0; d < rank; ++d) t.shape.push_back(r.u32());
        const std::size_t numel = shape_numel(t.shape);
        if (numel > r.remaining() / 4) throw CheckpointTruncatedError("checkpoint truncated inside tensor " + t.name);
        t.values.resize(numel);
        for (auto& v : t.values) v = r.f32();
        out.push_back(std::move(t));
    }
    if (r.remaining() < 4) throw CheckpointTruncatedError("checkpoint truncated before CRC");
    if (r.remaining() > 4) throw CheckpointCorruptError("trailing bytes after checkpoint");
    const std::uint32_t stored = r.u32();
    if (stored != detail::crc32_of(bytes.first(bytes.size() - 4)))
        throw CheckpointCorruptError("checkpoint CRC mismatch");
    return out;
}

template <std::floating_point T>
std::vector<CheckpointTensor> checkpoint_tensors(const FusionModel<T>& m) {
    std::vector<CheckpointTensor> out;
    for (const auto& nt : m.named_tensors())
        out.push_back({nt.name, nt.tensor.shape(),
                       std::vector<float>(nt.tensor.data().begin(), nt.tensor.data().end())});
    return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

template <std::floating_point T>
void save_checkpoint(const FusionModel<T>& m, const std::filesystem::path& path) {
    write_file_bytes(path, encode_checkpoint(checkpoint_tensors(m)));
}

/// Copies stored values into `m`; names and shapes must match exactly.
template <std::floating_point T>
void restore_checkpoint(FusionModel<T>& m, std::span<const CheckpointTensor> stored) {
    std::map<std::string, const CheckpointTensor*> by_name;
    for (const auto& t : stored) by_name[t.name] = &t;
    auto expected = m.named_tensors();
    for (auto& nt : expected) {
        auto it = by_name.find(nt.name);
        if (it == by_name.end()) throw CheckpointShapeError("checkpoint is missing tensor " + nt.name);
        if (it->second->shape != nt.tensor.shape())
            throw CheckpointShapeError("shape mismatch for tensor " + nt.name + ": file has " +
                                       shape_str(it->second->shape) + ", model expects " +
                                       shape_str(nt.tensor.shape()));
        auto dst = nt.tensor.mutable_data();
        std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
    }
    if (by_name.size() != expected.size())
        throw CheckpointShapeError("checkpoint holds " + std::to_string(by_name.size()) +
                                   " tensors, model expects " + std::to_string(expected.size()));
}

template <std::floating_point T = float>
FusionModel<T> load_checkpoint(const std::filesystem::path& path, const FusionModelConfig& cfg) {
    const auto bytes = read_file_bytes(path);
    const auto stored = decode_checkpoint(bytes);
    FusionModel<T> m(cfg);
    restore_checkpoint(m, stored);
    return m;
}

}  // namespace sefusion
