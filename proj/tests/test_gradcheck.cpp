#include <catch2/catch_amalgamated.hpp>

#include "linepix/adam.hpp"
#include "linepix/gradcheck.hpp"
#include "linepix/raster.hpp"

using namespace linepix;

TEST_CASE("analytic gradients match 64-bit central differences", "[slow]") {
    const auto report = gradient_check(16, 20240601, 200);
    for (const auto& t : report.tensors) {
        CAPTURE(t.name, t.coords_checked);
        CHECK(t.max_rel_err < 1e-5);
    }
    CHECK(report.passed);
}

TEST_CASE("all-zero input with zero biases gives zero conv1 weight gradient") {
    auto params = init_params<double>(16, 3);
    const BitGrid empty(16);
    ForwardCache<double> cache;
    forward(params, empty, RunMode::Train, 11, cache);
    const auto grads = backward(params, cache, one_hot<double>(1));
    for (double g : grads.conv1_w.data) CHECK(g == 0.0);
}

TEST_CASE("gradient accumulation is linear") {
    auto params = init_params<double>(16, 9);
    const auto img = rasterize_line({13, 55.0}, 16);
    const auto target = one_hot<double>(0);
    ForwardCache<double> cache;
    forward(params, img, RunMode::Train, 21, cache);

    const auto once = backward(params, cache, target);
    Gradients<double> twice = zero_params<double>(16);
    BackwardWorkspace<double> ws;
    backward_accumulate(params, cache, target, twice, 1.0, ws);
    backward_accumulate(params, cache, target, twice, 1.0, ws);

    auto a = once.tensors();
    auto b = twice.tensors();
    for (std::size_t t = 0; t < a.size(); ++t)
        for (std::size_t i = 0; i < a[t]->size(); ++i)
            CHECK(b[t]->data[i] == 2.0 * a[t]->data[i]);
}

TEST_CASE("backward rejects stale or wrong-mode caches") {
    auto params = init_params<float>(16, 1);
    const auto img = rasterize_line({12, 10.0}, 16);
    ForwardCache<float> cache;

    SECTION("eval-mode cache") {
        forward(params, img, RunMode::Eval, 0, cache);
        CHECK_THROWS_AS(backward(params, cache, one_hot<float>(1)), std::invalid_argument);
    }
    SECTION("stale after a parameter update") {
        forward(params, img, RunMode::Train, 5, cache);
        OptimizerState<float> opt(16);
        Gradients<float> grads = zero_params<float>(16);
        grads.fc_b.data[0] = 1.0f;
        adam_step(params, grads, opt, TrainConfig{});
        CHECK_THROWS_AS(backward(params, cache, one_hot<float>(1)), std::invalid_argument);
    }
    SECTION("missing cache") {
        ForwardCache<float> never_run;
        CHECK_THROWS_AS(backward(params, never_run, one_hot<float>(1)), std::invalid_argument);
    }
}
