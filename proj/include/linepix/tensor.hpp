#pragma once

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace linepix {

template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::initializer_list<std::size_t> s) : shape(s) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        data.assign(n, T{0});
    }

    std::size_t size() const { return data.size(); }
    T* begin() { return data.data(); }
    T* end() { return data.data() + data.size(); }
    const T* begin() const { return data.data(); }
    const T* end() const { return data.data() + data.size(); }
    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline bool finite_value(float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    return (bits & 0x7f800000u) != 0x7f800000u;
}
inline bool finite_value(double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    return (bits & 0x7ff0000000000000ull) != 0x7ff0000000000000ull;
}

template <typename T>
bool all_finite(const T* p, std::size_t n) {
    // Branch-free accumulate keeps the scan vectorizable.
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) ok &= finite_value(p[i]);
    return ok;
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
    return all_finite(v.data(), v.size());
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    return all_finite(t.data.data(), t.data.size());
}

}  // namespace linepix
