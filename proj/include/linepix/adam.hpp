#pragma once

// Adam with bias correction, applied tensor-by-tensor over the model.

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "linepix/cnn.hpp"

namespace linepix {

struct TrainConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double dropout_p = 0.25;
    int batch_size = 32;
    int max_epochs = 2000;
    std::uint64_t seed = 0;

    void validate() const {
        if (learning_rate <= 0) throw std::invalid_argument("config: learning_rate must be > 0");
        if (dropout_p < 0 || dropout_p >= 1)
            throw std::invalid_argument("config: dropout_p must be in [0, 1)");
        if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
        if (max_epochs < 0) throw std::invalid_argument("config: max_epochs must be >= 0");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw std::invalid_argument("config: betas must be in [0, 1)");
        if (adam_epsilon <= 0) throw std::invalid_argument("config: adam_epsilon must be > 0");
    }
};

template <typename T>
struct OptimizerState {
    ModelParams<T> m;  // first moments, zero-initialized
    ModelParams<T> v;  // second moments
    std::int64_t t = 0;

    explicit OptimizerState(int dim) : m(zero_params<T>(dim)), v(zero_params<T>(dim)) {}
};

template <typename T>
void adam_step(ModelParams<T>& params, const Gradients<T>& grads, OptimizerState<T>& state,
               const TrainConfig& config) {
    state.t += 1;
    const T lr = static_cast<T>(config.learning_rate);
    const T b1 = static_cast<T>(config.beta1);
    const T b2 = static_cast<T>(config.beta2);
    const T eps = static_cast<T>(config.adam_epsilon);
    const T bc1 = T{1} - static_cast<T>(std::pow(config.beta1, static_cast<double>(state.t)));
    const T bc2 = T{1} - static_cast<T>(std::pow(config.beta2, static_cast<double>(state.t)));

    auto ps = params.tensors();
    auto gs = grads.tensors();
    auto ms = state.m.tensors();
    auto vs = state.v.tensors();
    bool finite = true;
    for (std::size_t ti = 0; ti < ps.size(); ++ti) {
        T* p = ps[ti]->data.data();
        const T* g = gs[ti]->data.data();
        T* m = ms[ti]->data.data();
        T* v = vs[ti]->data.data();
        const std::size_t n = ps[ti]->size();
        if (gs[ti]->size() != n) throw std::invalid_argument("adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (T{1} - b1) * g[i];
            v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            finite &= finite_value(p[i]);
        }
    }
    if (!finite) throw std::runtime_error("adam_step: non-finite parameter update");
    params.revision += 1;
}

}  // namespace linepix
