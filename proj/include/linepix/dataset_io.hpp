#pragma once

// Pack file, version 1:
//   "LPX1" | version u16 | D u16 | angle step u32 (millideg) | image count u32
//   | conflict count u32 | per image: id u32, canonical angle u32 (millideg),
//   L u16, label u8, reserved u8, ceil(D^2/8) bytes of row-major MSB-first
//   pixels. All integers little-endian.
//
// The content digest is FNV-1a64 over the complete serialized byte stream;
// it is not stored in the file itself.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "linepix/dataset.hpp"

namespace linepix {

enum class IoError {
    BadMagic,
    VersionMismatch,
    Truncated,
    Malformed,
};

class DatasetIoError : public std::runtime_error {
public:
    DatasetIoError(IoError code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    IoError code() const { return code_; }

private:
    IoError code_;
};

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() {
        const std::uint8_t* p = take(2);
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32() {
        const std::uint8_t* p = take(4);
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }
    std::vector<std::uint8_t> bytes(std::size_t n) {
        const std::uint8_t* p = take(n);
        return std::vector<std::uint8_t>(p, p + n);
    }
    bool exhausted() const { return pos_ == size_; }

private:
    const std::uint8_t* take(std::size_t n) {
        if (pos_ + n > size_)
            throw DatasetIoError(IoError::Truncated, "dataset file: truncated payload");
        const std::uint8_t* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

}  // namespace detail

constexpr std::uint16_t kDatasetFormatVersion = 1;

inline std::vector<std::uint8_t> serialize_dataset(const Dataset& ds) {
    std::vector<std::uint8_t> out;
    const std::size_t pixel_bytes = (static_cast<std::size_t>(ds.dim) * ds.dim + 7) / 8;
    out.reserve(20 + ds.images.size() * (12 + pixel_bytes));
    for (char m : {'L', 'P', 'X', '1'}) out.push_back(static_cast<std::uint8_t>(m));
    detail::put_u16(out, kDatasetFormatVersion);
    detail::put_u16(out, static_cast<std::uint16_t>(ds.dim));
    detail::put_u32(out, ds.angle_step_millideg);
    detail::put_u32(out, static_cast<std::uint32_t>(ds.images.size()));
    detail::put_u32(out, ds.conflict_count);
    for (const auto& img : ds.images) {
        detail::put_u32(out, img.id);
        detail::put_u32(out, to_millideg(img.canonical.angle_deg));
        detail::put_u16(out, static_cast<std::uint16_t>(img.canonical.length_px));
        out.push_back(static_cast<std::uint8_t>(img.label));
        out.push_back(0);  // reserved
        auto px = img.bits.packed_bytes();
        out.insert(out.end(), px.begin(), px.end());
    }
    return out;
}

inline std::uint64_t dataset_digest(const Dataset& ds) {
    auto bytes = serialize_dataset(ds);
    return fnv1a64(bytes.data(), bytes.size());
}

inline Dataset parse_dataset(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader in(bytes.data(), bytes.size());
    auto magic = in.bytes(4);
    if (!(magic[0] == 'L' && magic[1] == 'P' && magic[2] == 'X' && magic[3] == '1'))
        throw DatasetIoError(IoError::BadMagic, "dataset file: bad magic");
    std::uint16_t version = in.u16();
    if (version != kDatasetFormatVersion)
        throw DatasetIoError(IoError::VersionMismatch,
                             "dataset file: unsupported version " + std::to_string(version));

    Dataset ds;
    ds.dim = in.u16();
    if (ds.dim < 4)
        throw DatasetIoError(IoError::Malformed, "dataset file: invalid dimension");
    ds.angle_step_millideg = in.u32();
    std::uint32_t count = in.u32();
    ds.conflict_count = in.u32();
    ds.length_min = 12;
    ds.length_max = ds.dim - 2;

    const std::size_t pixel_bytes = (static_cast<std::size_t>(ds.dim) * ds.dim + 7) / 8;
    ds.images.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        LineImage img;
        img.id = in.u32();
        std::uint32_t angle_md = in.u32();
        img.canonical.length_px = in.u16();
        img.canonical.angle_deg = from_millideg(angle_md);
        img.label = in.u8();
        in.u8();  // reserved
        img.dim = ds.dim;
        img.bits = BitGrid::from_packed_bytes(ds.dim, in.bytes(pixel_bytes));
        img.popcount = img.bits.popcount();
        if (img.id != i)
            throw DatasetIoError(IoError::Malformed, "dataset file: non-sequential image ids");
        ds.angle_index[angle_md].push_back(img.id);
        ds.images.push_back(std::move(img));
    }
    if (!in.exhausted())
        throw DatasetIoError(IoError::Malformed, "dataset file: trailing bytes");
    ds.content_hash = fnv1a64(bytes.data(), bytes.size());
    return ds;
}

// Atomic write (temp then rename); returns the content digest.
inline std::uint64_t write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    auto bytes = serialize_dataset(ds);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("write_dataset: cannot open " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write_dataset: short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    return fnv1a64(bytes.data(), bytes.size());
}

inline Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_dataset: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse_dataset(bytes);
}

// Millidegrees as minimal decimal text (40 -> "40", 2500 -> "2.5").
inline std::string format_millideg(std::uint32_t md) {
    char buf[32];
    if (md % 1000 == 0) {
        std::snprintf(buf, sizeof buf, "%u", md / 1000);
    } else {
        std::snprintf(buf, sizeof buf, "%u.%03u", md / 1000, md % 1000);
        std::string s(buf);
        while (s.back() == '0') s.pop_back();
        return s;
    }
    return buf;
}

inline std::string format_digest(std::uint64_t digest) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

// Sidecar manifest: one CSV row per image.
inline void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + tmp.string());
        out << "id,alpha_deg,length,label,popcount\n";
        for (const auto& img : ds.images)
            out << img.id << ',' << format_millideg(to_millideg(img.canonical.angle_deg)) << ','
                << img.canonical.length_px << ',' << img.label << ',' << img.popcount << '\n';
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace linepix
