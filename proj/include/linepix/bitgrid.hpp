#pragma once

// Packed D x D binary image. Bit index is row-major (r * dim + c), stored
// LSB-first inside 64-bit words; the MSB-first byte layout of the pack file
// is produced only at serialization time.

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "linepix/rng.hpp"

namespace linepix {

class BitGrid {
public:
    BitGrid() = default;
    explicit BitGrid(int dim)
        : dim_(dim), words_((static_cast<std::size_t>(dim) * dim + 63) / 64, 0) {
        if (dim <= 0) throw std::invalid_argument("BitGrid: dim must be positive");
    }

    int dim() const { return dim_; }
    std::size_t bit_count() const { return static_cast<std::size_t>(dim_) * dim_; }

    bool get(int r, int c) const {
        std::size_t i = index(r, c);
        return (words_[i >> 6] >> (i & 63)) & 1u;
    }
    void set(int r, int c) {
        std::size_t i = index(r, c);
        words_[i >> 6] |= (std::uint64_t{1} << (i & 63));
    }
    void flip(int r, int c) {
        std::size_t i = index(r, c);
        words_[i >> 6] ^= (std::uint64_t{1} << (i & 63));
    }

    int popcount() const {
        int n = 0;
        for (std::uint64_t w : words_) n += std::popcount(w);
        return n;
    }

    // Hamming distance; grids must share dims.
    int distance(const BitGrid& other) const {
        int n = 0;
        for (std::size_t i = 0; i < words_.size(); ++i)
            n += std::popcount(words_[i] ^ other.words_[i]);
        return n;
    }

    bool operator==(const BitGrid& other) const {
        return dim_ == other.dim_ && words_ == other.words_;
    }

    const std::vector<std::uint64_t>& words() const { return words_; }

    // Row-major MSB-first packed bytes (the on-disk pixel layout).
    std::vector<std::uint8_t> packed_bytes() const {
        std::vector<std::uint8_t> out((bit_count() + 7) / 8, 0);
        for (int r = 0; r < dim_; ++r)
            for (int c = 0; c < dim_; ++c)
                if (get(r, c)) {
                    std::size_t i = index(r, c);
                    out[i >> 3] |= static_cast<std::uint8_t>(0x80u >> (i & 7));
                }
        return out;
    }

    static BitGrid from_packed_bytes(int dim, const std::vector<std::uint8_t>& bytes) {
        BitGrid g(dim);
        for (std::size_t i = 0; i < g.bit_count(); ++i)
            if (bytes[i >> 3] & (0x80u >> (i & 7)))
                g.words_[i >> 6] |= (std::uint64_t{1} << (i & 63));
        return g;
    }

private:
    std::size_t index(int r, int c) const {
        if (r < 0 || c < 0 || r >= dim_ || c >= dim_)
            throw std::out_of_range("BitGrid: pixel out of range");
        return static_cast<std::size_t>(r) * dim_ + c;
    }

    int dim_ = 0;
    std::vector<std::uint64_t> words_;
};

// XOR-homomorphic grid hash: hash(g ^ bit) == hash(g) ^ key(bit), so the
// D^2 one-pixel variants of an image can be looked up without rehashing
// the whole grid. Keys are fixed, so hashes are stable across runs.
class ZobristHasher {
public:
    explicit ZobristHasher(int dim) : dim_(dim), keys_(static_cast<std::size_t>(dim) * dim) {
        Xoshiro256 rng(0x5a0b415ca11ed5eeULL ^ static_cast<std::uint64_t>(dim));
        for (auto& k : keys_) k = rng.next();
    }

    std::uint64_t hash(const BitGrid& g) const {
        std::uint64_t h = 0;
        for (int r = 0; r < dim_; ++r)
            for (int c = 0; c < dim_; ++c)
                if (g.get(r, c)) h ^= key(r, c);
        return h;
    }

    std::uint64_t key(int r, int c) const {
        return keys_[static_cast<std::size_t>(r) * dim_ + c];
    }

private:
    int dim_;
    std::vector<std::uint64_t> keys_;
};

// FNV-1a over arbitrary bytes; used for content digests of serialized files.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace linepix
