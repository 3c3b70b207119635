#pragma once

// Training loop: seeded-shuffled mini-batches over the complete image set
// (the set IS the population, so there is no held-out split), full-set
// eval-mode accuracy after every epoch, stop after three consecutive
// perfect evaluations. Deterministic given (dataset, config).

#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "linepix/adam.hpp"
#include "linepix/cnn.hpp"
#include "linepix/dataset.hpp"
#include "linepix/rng.hpp"

namespace linepix {

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainRun {
    std::uint64_t dataset_digest = 0;
    TrainConfig config;
    std::vector<EpochStats> history;
    ModelParams<float> params;
    bool converged = false;
};

inline std::size_t count_correct(const ModelParams<float>& params, const Dataset& dataset,
                                 ForwardCache<float>& cache) {
    if (dataset.dim != params.dim)
        throw std::invalid_argument("evaluate: dataset/model dim mismatch");
    std::size_t correct = 0;
    for (const auto& img : dataset.images) {
        auto probs = forward(params, img.bits, RunMode::Eval, 0, cache);
        if (predict_class(probs) == img.label) ++correct;
    }
    return correct;
}

inline double evaluate_accuracy(const ModelParams<float>& params, const Dataset& dataset) {
    ForwardCache<float> cache;
    return static_cast<double>(count_correct(params, dataset, cache)) /
           static_cast<double>(dataset.images.size());
}

using EpochCallback = std::function<void(int epoch, const EpochStats&)>;

inline std::uint64_t dropout_stream_seed(std::uint64_t seed, int epoch, std::uint32_t position) {
    return mix_seed(seed, (static_cast<std::uint64_t>(epoch) << 32) | position);
}

inline TrainRun train_model(const Dataset& dataset, const TrainConfig& config,
                            const EpochCallback& on_epoch = nullptr) {
    config.validate();
    if (dataset.images.empty()) throw std::invalid_argument("train_model: empty dataset");

    TrainRun run;
    run.dataset_digest = dataset.content_hash;
    run.config = config;
    run.params = init_params<float>(dataset.dim, config.seed);

    OptimizerState<float> opt(dataset.dim);
    Gradients<float> grads = zero_params<float>(dataset.dim);
    ForwardCache<float> cache;
    BackwardWorkspace<float> ws;
    Xoshiro256 shuffle_rng(mix_seed(config.seed, 0x5311f7a6e0d9cb42ULL));

    const std::size_t n = dataset.images.size();
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    int perfect_streak = 0;
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        shuffle_indices(order, shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const float inv_batch = 1.0f / static_cast<float>(end - start);
            for (Tensor<float>* t : grads.tensors())
                std::fill(t->data.begin(), t->data.end(), 0.0f);

            for (std::size_t i = start; i < end; ++i) {
                const LineImage& img = dataset.images[order[i]];
                const auto target = one_hot<float>(img.label);
                auto probs = forward(run.params, img.bits, RunMode::Train,
                                     dropout_stream_seed(config.seed, epoch,
                                                         static_cast<std::uint32_t>(i)),
                                     cache, config.dropout_p);
                loss_sum += bce_loss(probs, target);
                backward_accumulate(run.params, cache, target, grads, inv_batch, ws);
            }
            adam_step(run.params, grads, opt, config);
        }

        const std::size_t correct = count_correct(run.params, dataset, cache);
        EpochStats stats{loss_sum / static_cast<double>(n),
                         static_cast<double>(correct) / static_cast<double>(n)};
        run.history.push_back(stats);
        if (on_epoch) on_epoch(epoch, stats);

        perfect_streak = (correct == n) ? perfect_streak + 1 : 0;
        if (perfect_streak >= 3) {
            run.converged = true;
            break;
        }
    }
    return run;
}

}  // namespace linepix
