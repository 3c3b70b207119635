#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "linepix/cnn.hpp"
#include "linepix/raster.hpp"
#include "support/reference_cnn.hpp"

using namespace linepix;

TEST_CASE("parameter shapes follow the architecture") {
    const auto p = zero_params<float>(16);
    CHECK(p.conv1_w.shape == std::vector<std::size_t>{32, 1, 3, 3});
    CHECK(p.conv2_w.shape == std::vector<std::size_t>{32, 32, 3, 3});
    CHECK(p.fc_w.shape == std::vector<std::size_t>{128, 512});  // 32 * (16/4)^2
    CHECK(p.out_w.shape == std::vector<std::size_t>{2, 128});
    CHECK(flatten_width(80) == 32u * 20 * 20);
    CHECK_THROWS_AS(zero_params<float>(18), std::invalid_argument);  // not divisible by 4
}

TEST_CASE("init is seeded, bounded, unbiased") {
    const auto a = init_params<float>(16, 7);
    const auto b = init_params<float>(16, 7);
    const auto c = init_params<float>(16, 8);
    CHECK(a.conv1_w.data == b.conv1_w.data);
    CHECK(a.fc_w.data == b.fc_w.data);
    CHECK(a.conv1_w.data != c.conv1_w.data);
    for (float v : a.conv1_b.data) CHECK(v == 0.0f);
    for (float v : a.fc_b.data) CHECK(v == 0.0f);
    const double bound1 = std::sqrt(6.0 / (9 + 32 * 9));
    for (float v : a.conv1_w.data) CHECK(std::fabs(v) <= bound1);
    const double bound_fc = std::sqrt(6.0 / (512 + 128));
    for (float v : a.fc_w.data) CHECK(std::fabs(v) <= bound_fc);
}

TEST_CASE("all-zero parameters produce (0.5, 0.5)") {
    const auto p = zero_params<float>(16);
    ForwardCache<float> cache;
    const auto probs = forward(p, rasterize_line({12, 0.0}, 16), RunMode::Eval, 0, cache);
    CHECK(probs[0] == 0.5f);
    CHECK(probs[1] == 0.5f);
}

TEST_CASE("eval forward is deterministic and in (0,1)") {
    const auto p = init_params<float>(16, 42);
    const auto img = rasterize_line({13, 30.0}, 16);
    ForwardCache<float> c1, c2;
    const auto a = forward(p, img, RunMode::Eval, 0, c1);
    const auto b = forward(p, img, RunMode::Eval, 123, c2);  // seed ignored in eval
    CHECK(a == b);
    for (float v : a) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("optimized forward matches the scalar reference") {
    Xoshiro256 rng(2718);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = init_params<float>(16, 1000 + trial);
        const int length = 12 + static_cast<int>(rng.below(3));
        const double angle = rng.uniform() * 179.0;
        const auto img = rasterize_line({length, angle}, 16);
        ForwardCache<float> cache;
        const auto fast = forward(p, img, RunMode::Eval, 0, cache);
        const auto ref = testsupport::reference_forward(p, img);
        CAPTURE(trial, length, angle);
        CHECK(std::fabs(fast[0] - ref[0]) < 1e-6);
        CHECK(std::fabs(fast[1] - ref[1]) < 1e-6);
    }
}

TEST_CASE("train-mode forward matches reference incl. dropout mask") {
    const auto p = init_params<float>(16, 5);
    const auto img = rasterize_line({14, 100.0}, 16);
    ForwardCache<float> cache;
    const auto fast = forward(p, img, RunMode::Train, 999, cache, 0.25);
    const auto ref = testsupport::reference_forward(p, img, RunMode::Train, 999, 0.25);
    CHECK(std::fabs(fast[0] - ref[0]) < 1e-6);
    CHECK(std::fabs(fast[1] - ref[1]) < 1e-6);
}

TEST_CASE("dropout with p=0 equals eval forward exactly") {
    const auto p = init_params<float>(16, 5);
    const auto img = rasterize_line({14, 70.0}, 16);
    ForwardCache<float> ctrain, ceval;
    const auto a = forward(p, img, RunMode::Train, 4, ctrain, 0.0);
    const auto b = forward(p, img, RunMode::Eval, 0, ceval);
    CHECK(a == b);
}

TEST_CASE("forward rejects dim mismatch and non-finite parameters") {
    auto p = init_params<float>(16, 1);
    ForwardCache<float> cache;
    CHECK_THROWS_AS(forward(p, rasterize_line({12, 0.0}, 32), RunMode::Eval, 0, cache),
                    std::invalid_argument);
    p.conv1_w.data[0] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(forward(p, rasterize_line({12, 0.0}, 16), RunMode::Eval, 0, cache),
                    std::runtime_error);
}

TEST_CASE("binary cross-entropy values") {
    CHECK(bce_loss<double>({0.5, 0.5}, {1, 0}) == Catch::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(bce_loss<double>({1.0, 0.0}, {1, 0}) <= 1.2e-7);  // clamped perfect prediction
    CHECK(bce_loss<double>({0.9, 0.1}, {1, 0}) ==
          Catch::Approx(-std::log(0.9)).epsilon(1e-9));
}

TEST_CASE("predict_class with documented tie-break") {
    CHECK(predict_class<double>({0.9, 0.2}) == 0);
    CHECK(predict_class<double>({0.3, 0.7}) == 1);
    CHECK(predict_class<double>({0.5, 0.5}) == 0);  // exact tie -> class 0
}
