#pragma once

// The classifier: conv3x3(32) + ReLU + maxpool2 -> conv3x3(32) + ReLU +
// maxpool2 -> flatten -> dropout(0.25, train only) -> dense 128 + ReLU ->
// dense 2 + sigmoid. Convolutions use same-padding so the spatial size
// halves exactly at each pool and the flatten width is 32*(D/4)^2.
//
// Everything is templated on the scalar type: float for training and the
// attack sweep, double for finite-difference gradient checks. Activation
// buffers live in a caller-owned cache so the hot loops never allocate.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "linepix/bitgrid.hpp"
#include "linepix/rng.hpp"
#include "linepix/tensor.hpp"

namespace linepix {

constexpr int kConvChannels = 32;
constexpr int kHiddenUnits = 128;
constexpr int kOutputUnits = 2;
constexpr double kProbClamp = 1e-7;

inline std::size_t flatten_width(int dim) {
    return static_cast<std::size_t>(kConvChannels) * (dim / 4) * (dim / 4);
}

template <typename T>
struct ModelParams {
    int dim = 0;
    Tensor<T> conv1_w, conv1_b;
    Tensor<T> conv2_w, conv2_b;
    Tensor<T> fc_w, fc_b;
    Tensor<T> out_w, out_b;
    std::uint64_t revision = 0;  // bumped on every in-place update

    std::array<Tensor<T>*, 8> tensors() {
        return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc_w, &fc_b, &out_w, &out_b};
    }
    std::array<const Tensor<T>*, 8> tensors() const {
        return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &fc_w, &fc_b, &out_w, &out_b};
    }
};

template <typename T>
using Gradients = ModelParams<T>;

template <typename T>
ModelParams<T> zero_params(int dim) {
    if (dim < 4 || dim % 4 != 0)
        throw std::invalid_argument("model: dim must be divisible by 4");
    const std::size_t f = flatten_width(dim);
    ModelParams<T> p;
    p.dim = dim;
    p.conv1_w = Tensor<T>{static_cast<std::size_t>(kConvChannels), 1, 3, 3};
    p.conv1_b = Tensor<T>{static_cast<std::size_t>(kConvChannels)};
    p.conv2_w = Tensor<T>{static_cast<std::size_t>(kConvChannels),
                          static_cast<std::size_t>(kConvChannels), 3, 3};
    p.conv2_b = Tensor<T>{static_cast<std::size_t>(kConvChannels)};
    p.fc_w = Tensor<T>{static_cast<std::size_t>(kHiddenUnits), f};
    p.fc_b = Tensor<T>{static_cast<std::size_t>(kHiddenUnits)};
    p.out_w = Tensor<T>{static_cast<std::size_t>(kOutputUnits),
                        static_cast<std::size_t>(kHiddenUnits)};
    p.out_b = Tensor<T>{static_cast<std::size_t>(kOutputUnits)};
    return p;
}

// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
// A fixed draw order and the portable PRNG make the result a pure function
// of (dim, seed).
template <typename T>
ModelParams<T> init_params(int dim, std::uint64_t seed) {
    ModelParams<T> p = zero_params<T>(dim);
    Xoshiro256 rng(seed);
    auto fill = [&rng](Tensor<T>& t, double fan_in, double fan_out) {
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& v : t.data) v = static_cast<T>(rng.uniform_symmetric(bound));
    };
    fill(p.conv1_w, 1 * 9, kConvChannels * 9);
    fill(p.conv2_w, kConvChannels * 9, kConvChannels * 9);
    fill(p.fc_w, static_cast<double>(flatten_width(dim)), kHiddenUnits);
    fill(p.out_w, kHiddenUnits, kOutputUnits);
    return p;
}

enum class RunMode { Train, Eval };

template <typename T>
struct ForwardCache {
    int dim = 0;
    RunMode mode = RunMode::Eval;
    const ModelParams<T>* params = nullptr;
    std::uint64_t params_revision = 0;
    double dropout_p = 0.25;
    bool valid = false;

    std::vector<T> input;                 // D*D
    std::vector<T> conv1;                 // 32*D*D, post-ReLU
    std::vector<T> pool1;                 // 32*(D/2)^2
    std::vector<std::uint8_t> pool1_arg;  // window-local argmax, 0..3
    std::vector<T> conv2;                 // 32*(D/2)^2, post-ReLU
    std::vector<T> pool2;                 // flatten, 32*(D/4)^2
    std::vector<std::uint8_t> pool2_arg;
    std::vector<std::uint8_t> drop_mask;  // train mode only
    std::vector<T> dropped;               // train mode only
    std::vector<T> fc_pre;                // 128, pre-ReLU
    std::vector<T> fc_act;                // 128, post-ReLU
    std::array<T, 2> logits{};
    std::array<T, 2> probs{};

    void ensure(int d) {
        if (dim == d && !input.empty()) return;
        dim = d;
        const int h = d / 2;
        input.assign(static_cast<std::size_t>(d) * d, T{0});
        conv1.assign(static_cast<std::size_t>(kConvChannels) * d * d, T{0});
        pool1.assign(static_cast<std::size_t>(kConvChannels) * h * h, T{0});
        pool1_arg.assign(pool1.size(), 0);
        conv2.assign(pool1.size(), T{0});
        pool2.assign(flatten_width(d), T{0});
        pool2_arg.assign(pool2.size(), 0);
        drop_mask.assign(pool2.size(), 1);
        dropped.assign(pool2.size(), T{0});
        fc_pre.assign(kHiddenUnits, T{0});
        fc_act.assign(kHiddenUnits, T{0});
    }
};

namespace detail {

// 3x3 same-padding convolution, NCHW. Rows are processed with all three
// vertical taps fused and restrict-qualified pointers so the inner loops
// vectorize; the first/last column of each row is patched up afterwards.
template <typename T>
void conv3x3_row(const T* __restrict in_m1, const T* __restrict in_0, const T* __restrict in_p1,
                 const T* __restrict w, T* __restrict out, int n) {
    // Interior: out[x] += sum of 9 taps around column x.
    for (int x = 1; x < n - 1; ++x) {
        T acc = out[x];
        if (in_m1) {
            acc += w[0] * in_m1[x - 1];
            acc += w[1] * in_m1[x];
            acc += w[2] * in_m1[x + 1];
        }
        acc += w[3] * in_0[x - 1];
        acc += w[4] * in_0[x];
        acc += w[5] * in_0[x + 1];
        if (in_p1) {
            acc += w[6] * in_p1[x - 1];
            acc += w[7] * in_p1[x];
            acc += w[8] * in_p1[x + 1];
        }
        out[x] = acc;
    }
    // Edge columns (out-of-range taps dropped by the zero padding).
    {
        T acc = out[0];
        if (in_m1) acc += w[1] * in_m1[0] + w[2] * in_m1[1];
        acc += w[4] * in_0[0] + w[5] * in_0[1];
        if (in_p1) acc += w[7] * in_p1[0] + w[8] * in_p1[1];
        out[0] = acc;
    }
    {
        T acc = out[n - 1];
        if (in_m1) acc += w[0] * in_m1[n - 2] + w[1] * in_m1[n - 1];
        acc += w[3] * in_0[n - 2] + w[4] * in_0[n - 1];
        if (in_p1) acc += w[6] * in_p1[n - 2] + w[7] * in_p1[n - 1];
        out[n - 1] = acc;
    }
}

// Same computation for two output channels at once; the shared input rows
// are loaded once per pair, which roughly halves the load pressure.
template <typename T>
void conv3x3_row2(const T* __restrict in_m1, const T* __restrict in_0,
                  const T* __restrict in_p1, const T* __restrict wa, const T* __restrict wb,
                  T* __restrict oa, T* __restrict ob, int n) {
    for (int x = 1; x < n - 1; ++x) {
        T acca = oa[x], accb = ob[x];
        if (in_m1) {
            const T v0 = in_m1[x - 1], v1 = in_m1[x], v2 = in_m1[x + 1];
            acca += wa[0] * v0 + wa[1] * v1 + wa[2] * v2;
            accb += wb[0] * v0 + wb[1] * v1 + wb[2] * v2;
        }
        {
            const T v0 = in_0[x - 1], v1 = in_0[x], v2 = in_0[x + 1];
            acca += wa[3] * v0 + wa[4] * v1 + wa[5] * v2;
            accb += wb[3] * v0 + wb[4] * v1 + wb[5] * v2;
        }
        if (in_p1) {
            const T v0 = in_p1[x - 1], v1 = in_p1[x], v2 = in_p1[x + 1];
            acca += wa[6] * v0 + wa[7] * v1 + wa[8] * v2;
            accb += wb[6] * v0 + wb[7] * v1 + wb[8] * v2;
        }
        oa[x] = acca;
        ob[x] = accb;
    }
    for (int x : {0, n - 1}) {
        const int lo = x == 0 ? 0 : x - 1;
        const int hi = x == n - 1 ? x : x + 1;
        T acca = oa[x], accb = ob[x];
        for (int k = lo; k <= hi; ++k) {
            const int kx = k - x + 1;
            if (in_m1) { acca += wa[kx] * in_m1[k]; accb += wb[kx] * in_m1[k]; }
            acca += wa[3 + kx] * in_0[k];
            accb += wb[3 + kx] * in_0[k];
            if (in_p1) { acca += wa[6 + kx] * in_p1[k]; accb += wb[6 + kx] * in_p1[k]; }
        }
        oa[x] = acca;
        ob[x] = accb;
    }
}

template <typename T>
void conv3x3_same(const T* in, int in_ch, int hw, const T* w, const T* b, T* out, int out_ch) {
    const std::size_t plane = static_cast<std::size_t>(hw) * hw;
    for (int co = 0; co + 2 <= out_ch; co += 2) {
        T* opa = out + co * plane;
        T* opb = out + (co + 1) * plane;
        for (std::size_t i = 0; i < plane; ++i) opa[i] = b[co];
        for (std::size_t i = 0; i < plane; ++i) opb[i] = b[co + 1];
        for (int ci = 0; ci < in_ch; ++ci) {
            const T* ip = in + ci * plane;
            const T* wpa = w + (static_cast<std::size_t>(co) * in_ch + ci) * 9;
            const T* wpb = w + (static_cast<std::size_t>(co + 1) * in_ch + ci) * 9;
            for (int y = 0; y < hw; ++y) {
                const T* row_m1 = y > 0 ? ip + static_cast<std::size_t>(y - 1) * hw : nullptr;
                const T* row_0 = ip + static_cast<std::size_t>(y) * hw;
                const T* row_p1 = y < hw - 1 ? ip + static_cast<std::size_t>(y + 1) * hw : nullptr;
                conv3x3_row2(row_m1, row_0, row_p1, wpa, wpb,
                             opa + static_cast<std::size_t>(y) * hw,
                             opb + static_cast<std::size_t>(y) * hw, hw);
            }
        }
    }
    if (out_ch % 2) {
        const int co = out_ch - 1;
        T* op = out + co * plane;
        for (std::size_t i = 0; i < plane; ++i) op[i] = b[co];
        for (int ci = 0; ci < in_ch; ++ci) {
            const T* ip = in + ci * plane;
            const T* wp = w + (static_cast<std::size_t>(co) * in_ch + ci) * 9;
            for (int y = 0; y < hw; ++y) {
                const T* row_m1 = y > 0 ? ip + static_cast<std::size_t>(y - 1) * hw : nullptr;
                const T* row_0 = ip + static_cast<std::size_t>(y) * hw;
                const T* row_p1 = y < hw - 1 ? ip + static_cast<std::size_t>(y + 1) * hw : nullptr;
                conv3x3_row(row_m1, row_0, row_p1, wp, op + static_cast<std::size_t>(y) * hw, hw);
            }
        }
    }
}

// Dot product with independent partial sums; reassociation keeps the FMA
// chains off the critical path. Order is fixed, so results stay
// deterministic run to run.
template <typename T>
T dot_fast(const T* __restrict a, const T* __restrict b, std::size_t n) {
    T s0{}, s1{}, s2{}, s3{}, s4{}, s5{}, s6{}, s7{};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        s4 += a[i + 4] * b[i + 4];
        s5 += a[i + 5] * b[i + 5];
        s6 += a[i + 6] * b[i + 6];
        s7 += a[i + 7] * b[i + 7];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
}

template <typename T>
void relu_inplace(T* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = p[i] > T{0} ? p[i] : T{0};
}

// 2x2 stride-2 maxpool; argmax records the first (row-major) maximum so the
// backward route is unambiguous on ties.
template <typename T>
void maxpool2x2(const T* in, int ch, int hw, T* out, std::uint8_t* arg) {
    const int ohw = hw / 2;
    for (int c = 0; c < ch; ++c) {
        const T* ip = in + static_cast<std::size_t>(c) * hw * hw;
        T* op = out + static_cast<std::size_t>(c) * ohw * ohw;
        std::uint8_t* ap = arg + static_cast<std::size_t>(c) * ohw * ohw;
        for (int y = 0; y < ohw; ++y) {
            for (int x = 0; x < ohw; ++x) {
                const T* win = ip + static_cast<std::size_t>(2 * y) * hw + 2 * x;
                T best = win[0];
                std::uint8_t bi = 0;
                if (win[1] > best) { best = win[1]; bi = 1; }
                if (win[hw] > best) { best = win[hw]; bi = 2; }
                if (win[hw + 1] > best) { best = win[hw + 1]; bi = 3; }
                op[y * ohw + x] = best;
                ap[y * ohw + x] = bi;
            }
        }
    }
}

template <typename T>
void dense(const T* w, const T* b, const T* x, int in_n, int out_n, T* y) {
    for (int o = 0; o < out_n; ++o) {
        const T* wr = w + static_cast<std::size_t>(o) * in_n;
        y[o] = b[o] + dot_fast(wr, x, static_cast<std::size_t>(in_n));
    }
}

template <typename T>
T sigmoid(T z) {
    return T{1} / (T{1} + std::exp(-z));
}

}  // namespace detail

template <typename T>
void image_to_input(const BitGrid& image, std::vector<T>& input) {
    const int d = image.dim();
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
            input[static_cast<std::size_t>(r) * d + c] = image.get(r, c) ? T{1} : T{0};
}

template <typename T>
std::array<T, 2> forward(const ModelParams<T>& params, const BitGrid& image, RunMode mode,
                         std::uint64_t dropout_seed, ForwardCache<T>& cache,
                         double dropout_p = 0.25) {
    const int d = params.dim;
    if (image.dim() != d) throw std::invalid_argument("forward: image/model dim mismatch");
    cache.ensure(d);
    cache.mode = mode;
    cache.params = &params;
    cache.params_revision = params.revision;
    cache.dropout_p = dropout_p;

    image_to_input(image, cache.input);

    const int h = d / 2;
    detail::conv3x3_same(cache.input.data(), 1, d, params.conv1_w.data.data(),
                         params.conv1_b.data.data(), cache.conv1.data(), kConvChannels);
    detail::relu_inplace(cache.conv1.data(), cache.conv1.size());
    detail::maxpool2x2(cache.conv1.data(), kConvChannels, d, cache.pool1.data(),
                       cache.pool1_arg.data());

    detail::conv3x3_same(cache.pool1.data(), kConvChannels, h, params.conv2_w.data.data(),
                         params.conv2_b.data.data(), cache.conv2.data(), kConvChannels);
    detail::relu_inplace(cache.conv2.data(), cache.conv2.size());
    detail::maxpool2x2(cache.conv2.data(), kConvChannels, h, cache.pool2.data(),
                       cache.pool2_arg.data());

    const T* flat = cache.pool2.data();
    const std::size_t f = cache.pool2.size();
    if (mode == RunMode::Train) {
        // Inverted dropout: surviving units scaled by 1/(1-p) at train time,
        // inference untouched.
        const double p = cache.dropout_p;
        const T scale = static_cast<T>(1.0 / (1.0 - p));
        Xoshiro256 rng(dropout_seed);
        for (std::size_t i = 0; i < f; ++i) {
            const bool keep = rng.uniform() >= p;
            cache.drop_mask[i] = keep ? 1 : 0;
            cache.dropped[i] = keep ? cache.pool2[i] * scale : T{0};
        }
        flat = cache.dropped.data();
    }

    detail::dense(params.fc_w.data.data(), params.fc_b.data.data(), flat, static_cast<int>(f),
                  kHiddenUnits, cache.fc_pre.data());
    for (int i = 0; i < kHiddenUnits; ++i)
        cache.fc_act[i] = cache.fc_pre[i] > T{0} ? cache.fc_pre[i] : T{0};

    detail::dense(params.out_w.data.data(), params.out_b.data.data(), cache.fc_act.data(),
                  kHiddenUnits, kOutputUnits, cache.logits.data());
    for (int i = 0; i < kOutputUnits; ++i) cache.probs[i] = detail::sigmoid(cache.logits[i]);

    if (!all_finite(cache.conv1) || !all_finite(cache.fc_pre) ||
        !finite_value(cache.probs[0]) || !finite_value(cache.probs[1]))
        throw std::runtime_error("forward: non-finite intermediate");

    cache.valid = true;
    return cache.probs;
}

// Mean over the two sigmoid units of the binary cross-entropy against a
// one-hot target; probabilities clamped before the log.
template <typename T>
T bce_loss(const std::array<T, 2>& probs, const std::array<T, 2>& target) {
    T total{0};
    for (int i = 0; i < 2; ++i) {
        T p = probs[i];
        if (p < static_cast<T>(kProbClamp)) p = static_cast<T>(kProbClamp);
        if (p > T{1} - static_cast<T>(kProbClamp)) p = T{1} - static_cast<T>(kProbClamp);
        total += -(target[i] * std::log(p) + (T{1} - target[i]) * std::log(T{1} - p));
    }
    return total / T{2};
}

inline int predict_class(double p0, double p1) { return p1 > p0 ? 1 : 0; }

template <typename T>
int predict_class(const std::array<T, 2>& probs) {
    return probs[1] > probs[0] ? 1 : 0;
}

template <typename T>
std::array<T, 2> one_hot(int label) {
    return label == 0 ? std::array<T, 2>{T{1}, T{0}} : std::array<T, 2>{T{0}, T{1}};
}

template <typename T>
struct BackwardWorkspace {
    std::vector<T> d_fc_act;   // 128
    std::vector<T> d_flat;     // F
    std::vector<T> d_conv2;    // 32*(D/2)^2 (then reused as d_pool1)
    std::vector<T> d_pool1;    // 32*(D/2)^2
    std::vector<T> d_conv1;    // 32*D*D

    void ensure(int d) {
        const int h = d / 2;
        d_fc_act.assign(kHiddenUnits, T{0});
        d_flat.assign(flatten_width(d), T{0});
        d_conv2.assign(static_cast<std::size_t>(kConvChannels) * h * h, T{0});
        d_pool1.assign(d_conv2.size(), T{0});
        d_conv1.assign(static_cast<std::size_t>(kConvChannels) * d * d, T{0});
    }
};

namespace detail {

// dIn and dW for the 3x3 same-padding convolution; dOut must already be
// gated through the ReLU. The weight-gradient dot and the input-gradient
// axpy run as separate row loops so each vectorizes.
template <typename T>
void axpy(T a, const T* __restrict x, T* __restrict y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void conv3x3_backward(const T* in, int in_ch, int hw, const T* w, const T* d_out, int out_ch,
                      T* d_in, T* dw, T* db, T scale) {
    const std::size_t plane = static_cast<std::size_t>(hw) * hw;
    if (d_in)
        for (std::size_t i = 0; i < plane * in_ch; ++i) d_in[i] = T{0};
    for (int co = 0; co < out_ch; ++co) {
        const T* dop = d_out + co * plane;
        {
            T s0{}, s1{}, s2{}, s3{};
            std::size_t i = 0;
            for (; i + 4 <= plane; i += 4) {
                s0 += dop[i];
                s1 += dop[i + 1];
                s2 += dop[i + 2];
                s3 += dop[i + 3];
            }
            for (; i < plane; ++i) s0 += dop[i];
            db[co] += scale * ((s0 + s1) + (s2 + s3));
        }
        for (int ci = 0; ci < in_ch; ++ci) {
            const T* ip = in + ci * plane;
            T* dip = d_in ? d_in + ci * plane : nullptr;
            const T* wp = w + (static_cast<std::size_t>(co) * in_ch + ci) * 9;
            T* dwp = dw + (static_cast<std::size_t>(co) * in_ch + ci) * 9;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const T wv = wp[(dy + 1) * 3 + (dx + 1)];
                    T wacc{0};
                    const int y0 = dy < 0 ? 1 : 0;
                    const int y1 = dy > 0 ? hw - 1 : hw;
                    const int x0 = dx < 0 ? 1 : 0;
                    const int x1 = dx > 0 ? hw - 1 : hw;
                    const std::size_t len = static_cast<std::size_t>(x1 - x0);
                    for (int y = y0; y < y1; ++y) {
                        const T* dorow = dop + static_cast<std::size_t>(y) * hw + x0;
                        const T* irow = ip + static_cast<std::size_t>(y + dy) * hw + dx + x0;
                        wacc += dot_fast(dorow, irow, len);
                        if (dip)
                            axpy(wv, dorow, dip + static_cast<std::size_t>(y + dy) * hw + dx + x0,
                                 len);
                    }
                    dwp[(dy + 1) * 3 + (dx + 1)] += scale * wacc;
                }
            }
        }
    }
}

}  // namespace detail

// Accumulates scale * dLoss/dParam into `grads` for the sample held in
// `cache` (which must come from a train-mode forward on the same params).
template <typename T>
void backward_accumulate(const ModelParams<T>& params, const ForwardCache<T>& cache,
                         const std::array<T, 2>& target, Gradients<T>& grads, T scale,
                         BackwardWorkspace<T>& ws) {
    if (!cache.valid || cache.params != &params || cache.params_revision != params.revision)
        throw std::invalid_argument("backward: cache is stale or missing");
    if (cache.mode != RunMode::Train)
        throw std::invalid_argument("backward: cache must come from a train-mode forward");

    const int d = params.dim;
    const int h = d / 2;
    ws.ensure(d);

    // Output head: dL/dz through clamp + log + sigmoid. Where the clamp is
    // active the loss is locally flat, so the gradient is exactly zero.
    std::array<T, 2> d_logits{};
    for (int i = 0; i < 2; ++i) {
        const T p = cache.probs[i];
        if (p <= static_cast<T>(kProbClamp) || p >= T{1} - static_cast<T>(kProbClamp)) {
            d_logits[i] = T{0};
            continue;
        }
        // d/dp of -(t ln p + (1-t) ln(1-p)) / 2, times sigmoid' = p(1-p).
        d_logits[i] = (p - target[i]) / T{2};
    }

    for (int o = 0; o < kOutputUnits; ++o) {
        grads.out_b[o] += scale * d_logits[o];
        const T* wr = params.out_w.data.data() + static_cast<std::size_t>(o) * kHiddenUnits;
        T* dwr = grads.out_w.data.data() + static_cast<std::size_t>(o) * kHiddenUnits;
        detail::axpy(scale * d_logits[o], cache.fc_act.data(), dwr,
                     static_cast<std::size_t>(kHiddenUnits));
        detail::axpy(d_logits[o], wr, ws.d_fc_act.data(), static_cast<std::size_t>(kHiddenUnits));
    }

    // Hidden dense layer (gradient gated by its ReLU).
    const std::size_t f = cache.pool2.size();
    const T* fc_in = cache.mode == RunMode::Train ? cache.dropped.data() : cache.pool2.data();
    for (int o = 0; o < kHiddenUnits; ++o) {
        const T dz = cache.fc_pre[o] > T{0} ? ws.d_fc_act[o] : T{0};
        grads.fc_b[o] += scale * dz;
        if (dz == T{0}) continue;
        const T* wr = params.fc_w.data.data() + static_cast<std::size_t>(o) * f;
        T* dwr = grads.fc_w.data.data() + static_cast<std::size_t>(o) * f;
        detail::axpy(scale * dz, fc_in, dwr, f);
        detail::axpy(dz, wr, ws.d_flat.data(), f);
    }

    // Dropout backward reuses the forward mask and scaling.
    {
        const T drop_scale = static_cast<T>(1.0 / (1.0 - cache.dropout_p));
        for (std::size_t i = 0; i < f; ++i)
            ws.d_flat[i] = cache.drop_mask[i] ? ws.d_flat[i] * drop_scale : T{0};
    }

    // Unpool into conv2, gate through conv2's ReLU.
    {
        const int ph = d / 4;
        for (std::size_t i = 0; i < ws.d_conv2.size(); ++i) ws.d_conv2[i] = T{0};
        for (int c = 0; c < kConvChannels; ++c) {
            for (int y = 0; y < ph; ++y) {
                for (int x = 0; x < ph; ++x) {
                    const std::size_t pi =
                        (static_cast<std::size_t>(c) * ph + y) * ph + x;
                    const std::uint8_t a = cache.pool2_arg[pi];
                    const int sy = 2 * y + (a >> 1), sx = 2 * x + (a & 1);
                    const std::size_t si = (static_cast<std::size_t>(c) * h + sy) * h + sx;
                    ws.d_conv2[si] = cache.conv2[si] > T{0} ? ws.d_flat[pi] : T{0};
                }
            }
        }
    }

    detail::conv3x3_backward(cache.pool1.data(), kConvChannels, h, params.conv2_w.data.data(),
                             ws.d_conv2.data(), kConvChannels, ws.d_pool1.data(),
                             grads.conv2_w.data.data(), grads.conv2_b.data.data(), scale);

    // Unpool into conv1, gate through conv1's ReLU.
    {
        for (std::size_t i = 0; i < ws.d_conv1.size(); ++i) ws.d_conv1[i] = T{0};
        for (int c = 0; c < kConvChannels; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < h; ++x) {
                    const std::size_t pi = (static_cast<std::size_t>(c) * h + y) * h + x;
                    const std::uint8_t a = cache.pool1_arg[pi];
                    const int sy = 2 * y + (a >> 1), sx = 2 * x + (a & 1);
                    const std::size_t si = (static_cast<std::size_t>(c) * d + sy) * d + sx;
                    ws.d_conv1[si] = cache.conv1[si] > T{0} ? ws.d_pool1[pi] : T{0};
                }
            }
        }
    }

    detail::conv3x3_backward(cache.input.data(), 1, d, params.conv1_w.data.data(),
                             ws.d_conv1.data(), kConvChannels, static_cast<T*>(nullptr),
                             grads.conv1_w.data.data(), grads.conv1_b.data.data(), scale);
}

// Single-sample convenience wrapper: gradients of that sample's loss.
template <typename T>
Gradients<T> backward(const ModelParams<T>& params, const ForwardCache<T>& cache,
                      const std::array<T, 2>& target) {
    Gradients<T> grads = zero_params<T>(params.dim);
    BackwardWorkspace<T> ws;
    backward_accumulate(params, cache, target, grads, T{1}, ws);
    return grads;
}

}  // namespace linepix
