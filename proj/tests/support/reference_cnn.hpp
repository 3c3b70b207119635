#pragma once

// Test-only scalar reference forward pass. Deliberately the most naive
// formulation (per-output-pixel triple loops, sequential dot products,
// explicit bounds checks) and kept independent of the optimized kernels it
// is used to verify.

#include <array>
#include <cmath>
#include <vector>

#include "linepix/cnn.hpp"
#include "linepix/rng.hpp"

namespace linepix::testsupport {

template <typename T>
std::vector<T> ref_conv3x3(const std::vector<T>& in, int in_ch, int hw, const Tensor<T>& w,
                           const Tensor<T>& b, int out_ch) {
    std::vector<T> out(static_cast<std::size_t>(out_ch) * hw * hw, T{0});
    for (int co = 0; co < out_ch; ++co)
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x) {
                T acc = b.data[co];
                for (int ci = 0; ci < in_ch; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sy = y + ky - 1, sx = x + kx - 1;
                            if (sy < 0 || sy >= hw || sx < 0 || sx >= hw) continue;
                            acc += w.data[((static_cast<std::size_t>(co) * in_ch + ci) * 3 + ky) *
                                              3 +
                                          kx] *
                                   in[(static_cast<std::size_t>(ci) * hw + sy) * hw + sx];
                        }
                out[(static_cast<std::size_t>(co) * hw + y) * hw + x] = acc > T{0} ? acc : T{0};
            }
    return out;
}

template <typename T>
std::vector<T> ref_maxpool2(const std::vector<T>& in, int ch, int hw) {
    const int ohw = hw / 2;
    std::vector<T> out(static_cast<std::size_t>(ch) * ohw * ohw);
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y < ohw; ++y)
            for (int x = 0; x < ohw; ++x) {
                T best = in[(static_cast<std::size_t>(c) * hw + 2 * y) * hw + 2 * x];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const T v =
                            in[(static_cast<std::size_t>(c) * hw + 2 * y + dy) * hw + 2 * x + dx];
                        if (v > best) best = v;
                    }
                out[(static_cast<std::size_t>(c) * ohw + y) * ohw + x] = best;
            }
    return out;
}

template <typename T>
std::array<T, 2> reference_forward(const ModelParams<T>& params, const BitGrid& image,
                                   RunMode mode = RunMode::Eval, std::uint64_t dropout_seed = 0,
                                   double dropout_p = 0.25) {
    const int d = params.dim;
    std::vector<T> input(static_cast<std::size_t>(d) * d);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
            input[static_cast<std::size_t>(r) * d + c] = image.get(r, c) ? T{1} : T{0};

    auto conv1 = ref_conv3x3(input, 1, d, params.conv1_w, params.conv1_b, kConvChannels);
    auto pool1 = ref_maxpool2(conv1, kConvChannels, d);
    auto conv2 = ref_conv3x3(pool1, kConvChannels, d / 2, params.conv2_w, params.conv2_b,
                             kConvChannels);
    auto flat = ref_maxpool2(conv2, kConvChannels, d / 2);

    if (mode == RunMode::Train) {
        Xoshiro256 rng(dropout_seed);
        const T scale = static_cast<T>(1.0 / (1.0 - dropout_p));
        for (auto& v : flat) v = (rng.uniform() >= dropout_p) ? v * scale : T{0};
    }

    std::vector<T> hidden(kHiddenUnits);
    for (int o = 0; o < kHiddenUnits; ++o) {
        T acc = params.fc_b.data[o];
        for (std::size_t i = 0; i < flat.size(); ++i)
            acc += params.fc_w.data[static_cast<std::size_t>(o) * flat.size() + i] * flat[i];
        hidden[o] = acc > T{0} ? acc : T{0};
    }
    std::array<T, 2> probs{};
    for (int o = 0; o < kOutputUnits; ++o) {
        T acc = params.out_b.data[o];
        for (int i = 0; i < kHiddenUnits; ++i)
            acc += params.out_w.data[static_cast<std::size_t>(o) * kHiddenUnits + i] * hidden[i];
        probs[o] = T{1} / (T{1} + std::exp(-acc));
    }
    return probs;
}

}  // namespace linepix::testsupport
