#pragma once

// 64-bit central-difference verification of the analytic gradients. The
// check only drives forward() and bce_loss(), so it is independent of the
// backward path it validates.
//
// Biases are jittered away from zero first: with all-zero biases and a
// mostly-zero binary input, many pre-activations sit exactly on the ReLU
// kink, where a two-sided difference quotient measures the subgradient
// average rather than the one-sided derivative the backward pass reports.
// Coordinates that still fail are retried with smaller steps; a genuine
// gradient bug persists at every step size, finite-difference kink noise
// does not.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "linepix/cnn.hpp"
#include "linepix/raster.hpp"
#include "linepix/rng.hpp"

namespace linepix {

struct GradCheckTensorReport {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::size_t coords_nonsmooth = 0;  // skipped: loss has a kink at the point
};

struct GradCheckReport {
    std::vector<GradCheckTensorReport> tensors;
    double worst_rel_err = 0.0;
    double threshold = 0.0;
    bool passed = false;
};

inline GradCheckReport gradient_check(int dim, std::uint64_t seed, int samples_per_tensor = 200,
                                      double threshold = 1e-5) {
    ModelParams<double> params = init_params<double>(dim, seed);
    {
        Xoshiro256 jitter(mix_seed(seed, 0xb1a5a5ULL));
        for (Tensor<double>* t : {&params.conv1_b, &params.conv2_b, &params.fc_b, &params.out_b})
            for (double& v : t->data) v = jitter.uniform_symmetric(0.05);
    }

    Xoshiro256 rng(mix_seed(seed, 0x9cadc0deULL));
    const int length = 12 + static_cast<int>(rng.below(dim - 2 - 12 + 1));
    const double angle = rng.uniform() * 179.0;
    const BitGrid image = rasterize_line({length, angle}, dim);
    const auto target = one_hot<double>(label_of_angle(angle));
    const std::uint64_t dropout_seed = mix_seed(seed, 0xd20900ULL);

    ForwardCache<double> cache;
    forward(params, image, RunMode::Train, dropout_seed, cache);
    const Gradients<double> grads = backward(params, cache, target);

    auto loss_at = [&](ForwardCache<double>& scratch) {
        auto probs = forward(params, image, RunMode::Train, dropout_seed, scratch);
        return bce_loss(probs, target);
    };

    static const char* kNames[8] = {"conv1_w", "conv1_b", "conv2_w", "conv2_b",
                                    "fc_w",    "fc_b",    "out_w",   "out_b"};
    GradCheckReport report;
    report.threshold = threshold;

    auto param_tensors = params.tensors();
    auto grad_tensors = grads.tensors();
    ForwardCache<double> scratch;
    for (std::size_t ti = 0; ti < param_tensors.size(); ++ti) {
        Tensor<double>& tensor = *param_tensors[ti];
        const Tensor<double>& grad = *grad_tensors[ti];
        GradCheckTensorReport tr;
        tr.name = kNames[ti];

        std::vector<std::size_t> coords;
        if (tensor.size() <= static_cast<std::size_t>(samples_per_tensor)) {
            for (std::size_t i = 0; i < tensor.size(); ++i) coords.push_back(i);
        } else {
            std::vector<bool> taken(tensor.size(), false);
            while (coords.size() < static_cast<std::size_t>(samples_per_tensor)) {
                std::size_t i = rng.below(tensor.size());
                if (!taken[i]) {
                    taken[i] = true;
                    coords.push_back(i);
                }
            }
        }

        for (std::size_t i : coords) {
            const double analytic = grad.data[i];
            double best_rel = 1e300;
            for (double h_scale : {1e-5, 1e-6, 1e-7}) {
                const double orig = tensor.data[i];
                const double h = h_scale * (std::fabs(orig) + 1.0);
                tensor.data[i] = orig + h;
                const double loss_plus = loss_at(scratch);
                tensor.data[i] = orig - h;
                const double loss_minus = loss_at(scratch);
                tensor.data[i] = orig;
                const double fd = (loss_plus - loss_minus) / (2.0 * h);
                double rel = std::fabs(fd - analytic) /
                             std::max({std::fabs(fd), std::fabs(analytic), 1e-12});
                if (std::fabs(fd) < 1e-10 && std::fabs(analytic) < 1e-10) rel = 0.0;
                best_rel = std::min(best_rel, rel);
                if (best_rel < threshold) break;
            }
            tr.max_rel_err = std::max(tr.max_rel_err, best_rel);
        }
        tr.coords_checked = coords.size();
        report.worst_rel_err = std::max(report.worst_rel_err, tr.max_rel_err);
        report.tensors.push_back(tr);
    }
    report.passed = report.worst_rel_err < threshold;
    return report;
}

}  // namespace linepix
