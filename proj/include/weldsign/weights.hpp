#pragma once

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "weldsign/tensor.hpp"

namespace weldsign {

struct WeightFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadMagicError : WeightFormatError {
    using WeightFormatError::WeightFormatError;
};
struct BadCrcError : WeightFormatError {
    using WeightFormatError::WeightFormatError;
};
struct TruncatedFileError : WeightFormatError {
    using WeightFormatError::WeightFormatError;
};

/// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320).
inline uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0) {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int b = 0; b < 8; ++b) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return ~crc;
}

/// Ordered named-tensor collection. Insertion order is preserved and defines
/// the on-disk layout, so save/load round trips are byte-identical.
class WeightStore {
public:
    void add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw std::invalid_argument("weights: duplicate tensor name '" + name + "'");
        index_[name] = items_.size();
        items_.emplace_back(name, std::move(t));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const Tensor& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("weights: missing tensor '" + name + "'");
        return items_[it->second].second;
    }
    Tensor& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("weights: missing tensor '" + name + "'");
        return items_[it->second].second;
    }

    size_t size() const { return items_.size(); }
    int64_t total_floats() const {
        int64_t n = 0;
        for (const auto& [name, t] : items_) n += t.size();
        return n;
    }

    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, size_t> index_;
};

namespace detail {

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xFF));
    out.push_back(static_cast<uint8_t>(v >> 8));
}
inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

struct ByteReader {
    const uint8_t* p;
    size_t len;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > len) throw TruncatedFileError("weights: file truncated at byte " + std::to_string(pos));
    }
    uint8_t u8() {
        need(1);
        return p[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
};

}  // namespace detail

/// Serialize to the "WLDW" container: magic, u32 version, u32 tensor count,
/// then per tensor (u16 name length, name, u8 rank, rank u32 dims, raw
/// little-endian float32 payload), and a trailing CRC-32 of everything
/// before it.
inline std::vector<uint8_t> save_weights(const WeightStore& store) {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'W', 'L', 'D', 'W'});
    detail::put_u32(out, 1u);
    detail::put_u32(out, static_cast<uint32_t>(store.size()));
    for (const auto& [name, t] : store) {
        if (name.size() > 0xFFFF) throw std::invalid_argument("weights: tensor name too long");
        detail::put_u16(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<uint8_t>(t.rank()));
        for (int d = 0; d < t.rank(); ++d) detail::put_u32(out, static_cast<uint32_t>(t.dim(d)));
        const size_t payload = static_cast<size_t>(t.size()) * 4;
        const size_t at = out.size();
        out.resize(at + payload);
        static_assert(std::endian::native == std::endian::little, "float payload written natively");
        std::memcpy(out.data() + at, t.raw(), payload);
    }
    detail::put_u32(out, crc32(out.data(), out.size()));
    return out;
}

inline WeightStore load_weights(const uint8_t* data, size_t len) {
    detail::ByteReader r{data, len};
    r.need(4);
    if (std::memcmp(data, "WLDW", 4) != 0) throw BadMagicError("weights: bad magic, not a WLDW file");
    r.pos = 4;
    const uint32_t version = r.u32();
    if (version != 1) throw WeightFormatError("weights: unsupported version " + std::to_string(version));
    const uint32_t count = r.u32();
    WeightStore store;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = r.u16();
        r.need(name_len);
        std::string name(reinterpret_cast<const char*>(data + r.pos), name_len);
        r.pos += name_len;
        const uint8_t rank = r.u8();
        if (rank < 1 || rank > 4) throw WeightFormatError("weights: tensor '" + name + "' has bad rank");
        std::vector<int> shape(rank);
        int64_t n = 1;
        for (auto& d : shape) {
            d = static_cast<int>(r.u32());
            n *= d;
        }
        r.need(static_cast<size_t>(n) * 4);
        std::vector<float> values(static_cast<size_t>(n));
        std::memcpy(values.data(), data + r.pos, static_cast<size_t>(n) * 4);
        r.pos += static_cast<size_t>(n) * 4;
        store.add(name, Tensor(std::move(shape), std::move(values)));
    }
    if (len - r.pos < 4) throw TruncatedFileError("weights: file ends before the trailing checksum");
    if (len - r.pos > 4) throw WeightFormatError("weights: trailing bytes after last tensor");
    const uint32_t stored_crc = detail::ByteReader{data + r.pos, 4}.u32();
    if (crc32(data, len - 4) != stored_crc) throw BadCrcError("weights: CRC mismatch, file corrupt");
    return store;
}

inline WeightStore load_weights(const std::vector<uint8_t>& bytes) { return load_weights(bytes.data(), bytes.size()); }

inline void save_weights_file(const std::string& path, const WeightStore& store) {
    const std::vector<uint8_t> bytes = save_weights(store);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("weights: cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("weights: short write to '" + path + "'");
}

inline WeightStore load_weights_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("weights: cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return load_weights(bytes);
}

}  // namespace weldsign
