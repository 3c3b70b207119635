#include <catch2/catch_amalgamated.hpp>

#include "linepix/checkpoint.hpp"
#include "linepix/train.hpp"

using namespace linepix;

namespace {

const Dataset& small_dataset() {
    static const Dataset ds = generate_dataset(16, 2.0);
    return ds;
}

TrainConfig default_config(std::uint64_t seed) {
    TrainConfig config;
    config.seed = seed;
    return config;
}

}  // namespace

TEST_CASE("training reaches accuracy 1.0 on the complete 16x16 set", "[slow]") {
    const auto run = train_model(small_dataset(), default_config(1));
    REQUIRE(run.converged);
    CHECK(run.history.back().accuracy == 1.0);
    CHECK(evaluate_accuracy(run.params, small_dataset()) == 1.0);
    // Convergence flag requires three consecutive perfect evaluations.
    const auto& h = run.history;
    REQUIRE(h.size() >= 3);
    for (std::size_t i = h.size() - 3; i < h.size(); ++i) CHECK(h[i].accuracy == 1.0);
}

TEST_CASE("training is deterministic to the checkpoint byte level", "[slow]") {
    const auto a = train_model(small_dataset(), default_config(2));
    const auto b = train_model(small_dataset(), default_config(2));
    CHECK(serialize_checkpoint(a.params) == serialize_checkpoint(b.params));
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].loss == b.history[i].loss);
        CHECK(a.history[i].accuracy == b.history[i].accuracy);
    }
}

TEST_CASE("training loss decreases over the first epochs", "[slow]") {
    const auto run = train_model(small_dataset(), default_config(3));
    REQUIRE(run.history.size() >= 5);
    int non_decreasing = 0;
    for (int e = 1; e < 5; ++e)
        if (run.history[e].loss >= run.history[e - 1].loss) ++non_decreasing;
    CHECK(non_decreasing <= 1);
}

TEST_CASE("max_epochs=0 yields an unconverged run with empty history") {
    auto config = default_config(1);
    config.max_epochs = 0;
    const auto run = train_model(small_dataset(), config);
    CHECK_FALSE(run.converged);
    CHECK(run.history.empty());
}

TEST_CASE("all-zero parameters predict class 0 everywhere") {
    const auto& ds = small_dataset();
    const auto zero = zero_params<float>(16);
    std::size_t label0 = 0;
    for (const auto& img : ds.images)
        if (img.label == 0) ++label0;
    CHECK(evaluate_accuracy(zero, ds) ==
          Catch::Approx(static_cast<double>(label0) / ds.images.size()));
}

TEST_CASE("evaluation rejects dimension mismatch") {
    const auto params = zero_params<float>(32);
    CHECK_THROWS_AS(evaluate_accuracy(params, small_dataset()), std::invalid_argument);
}

TEST_CASE("dropout seeds differ across epochs and positions") {
    CHECK(dropout_stream_seed(1, 0, 0) != dropout_stream_seed(1, 0, 1));
    CHECK(dropout_stream_seed(1, 0, 0) != dropout_stream_seed(1, 1, 0));
    CHECK(dropout_stream_seed(1, 0, 0) != dropout_stream_seed(2, 0, 0));
}
