#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "linepix/protocol.hpp"

using namespace linepix;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
    auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("protocol trains the grid, writes a manifest, and resumes", "[slow]") {
    const auto root = fresh_dir("linepix_protocol_test");
    TrainConfig config;

    const auto first = run_protocol({16}, {2.0}, 2, 100, config, root, 2);
    REQUIRE(first.runs.size() == 2);
    CHECK(first.newly_trained == 2);
    CHECK(first.all_converged);
    CHECK(first.runs[0].seed == 100);
    CHECK(first.runs[1].seed == 101);
    CHECK(first.runs[0].dataset_digest == first.runs[1].dataset_digest);
    for (const auto& run : first.runs) {
        CHECK(fs::exists(run.checkpoint_path));
        CHECK(fs::exists(run.checkpoint_path + ".json"));
        CHECK(run.final_accuracy == 1.0);
    }

    // Manifest lists both runs with provenance.
    std::ifstream in(first.manifest_path);
    const auto manifest = nlohmann::json::parse(in);
    REQUIRE(manifest.at("runs").size() == 2);
    CHECK(manifest.at("summary").at("non_converged").get<int>() == 0);
    for (const auto& entry : manifest.at("runs")) {
        CHECK(entry.contains("dataset_digest"));
        CHECK(entry.contains("seed"));
        CHECK(entry.at("converged").get<bool>());
    }

    // Rerun: zero new training work, identical manifest content.
    const auto before = [&] {
        std::ifstream m(first.manifest_path);
        return std::string((std::istreambuf_iterator<char>(m)),
                           std::istreambuf_iterator<char>());
    }();
    const auto second = run_protocol({16}, {2.0}, 2, 100, config, root, 2);
    CHECK(second.newly_trained == 0);
    for (const auto& run : second.runs) CHECK(run.reused);
    const auto after = [&] {
        std::ifstream m(first.manifest_path);
        return std::string((std::istreambuf_iterator<char>(m)),
                           std::istreambuf_iterator<char>());
    }();
    CHECK(before == after);

    // Checkpoints referenced by the manifest re-evaluate to their recorded
    // accuracy exactly.
    const auto ds = read_dataset(root / "datasets" / "d16_s2000.lpx");
    for (const auto& run : second.runs) {
        const auto params = read_checkpoint(run.checkpoint_path);
        ForwardCache<float> cache;
        const double acc = static_cast<double>(count_correct(params, ds, cache)) /
                           static_cast<double>(ds.images.size());
        CHECK(acc == run.final_accuracy);
    }
}

TEST_CASE("corrupt checkpoints are retrained on resume", "[slow]") {
    const auto root = fresh_dir("linepix_protocol_corrupt");
    TrainConfig config;
    const auto first = run_protocol({16}, {2.0}, 1, 7, config, root, 1);
    REQUIRE(first.newly_trained == 1);

    {
        std::ofstream out(first.runs[0].checkpoint_path,
                          std::ios::binary | std::ios::trunc);
        out << "garbage";
    }
    const auto second = run_protocol({16}, {2.0}, 1, 7, config, root, 1);
    CHECK(second.newly_trained == 1);
    CHECK(second.runs[0].converged);
}

TEST_CASE("protocol rejects an empty grid") {
    CHECK_THROWS_AS(run_protocol({}, {2.0}, 1, 1, TrainConfig{}, fs::temp_directory_path(), 1),
                    std::invalid_argument);
}
