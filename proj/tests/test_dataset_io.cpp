#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "linepix/dataset.hpp"

using namespace linepix;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "linepix_io_test";
    fs::create_directories(dir);
    return dir;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.dim != b.dim || a.angle_step_millideg != b.angle_step_millideg ||
        a.conflict_count != b.conflict_count || a.images.size() != b.images.size())
        return false;
    for (std::size_t i = 0; i < a.images.size(); ++i) {
        const auto& x = a.images[i];
        const auto& y = b.images[i];
        if (x.id != y.id || !(x.bits == y.bits) || x.label != y.label ||
            x.popcount != y.popcount || x.canonical.length_px != y.canonical.length_px ||
            to_millideg(x.canonical.angle_deg) != to_millideg(y.canonical.angle_deg))
            return false;
    }
    return a.angle_index == b.angle_index;
}

}  // namespace

TEST_CASE("pack file round trip is bit exact") {
    const auto ds = generate_dataset(16, 2.0);
    const auto path = temp_dir() / "roundtrip.lpx";
    const auto digest = write_dataset(ds, path);
    CHECK(digest == ds.content_hash);
    const auto back = read_dataset(path);
    CHECK(datasets_equal(ds, back));
    CHECK(back.content_hash == ds.content_hash);
}

TEST_CASE("two generations with identical parameters serialize identically") {
    CHECK(serialize_dataset(generate_dataset(16, 1.0)) ==
          serialize_dataset(generate_dataset(16, 1.0)));
}

TEST_CASE("io errors are distinct") {
    const auto ds = generate_dataset(16, 2.0);
    auto bytes = serialize_dataset(ds);

    SECTION("bad magic") {
        bytes[0] = 'X';
        try {
            parse_dataset(bytes);
            FAIL("expected throw");
        } catch (const DatasetIoError& e) {
            CHECK(e.code() == IoError::BadMagic);
        }
    }
    SECTION("version mismatch") {
        bytes[4] = 0x7f;
        try {
            parse_dataset(bytes);
            FAIL("expected throw");
        } catch (const DatasetIoError& e) {
            CHECK(e.code() == IoError::VersionMismatch);
        }
    }
    SECTION("truncated payload") {
        bytes.resize(bytes.size() - 7);
        try {
            parse_dataset(bytes);
            FAIL("expected throw");
        } catch (const DatasetIoError& e) {
            CHECK(e.code() == IoError::Truncated);
        }
    }
    SECTION("trailing bytes") {
        bytes.push_back(0);
        try {
            parse_dataset(bytes);
            FAIL("expected throw");
        } catch (const DatasetIoError& e) {
            CHECK(e.code() == IoError::Malformed);
        }
    }
}

TEST_CASE("csv sidecar lists every image") {
    const auto ds = generate_dataset(16, 2.0);
    const auto path = temp_dir() / "sidecar.csv";
    write_dataset_csv(ds, path);
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "id,alpha_deg,length,label,popcount");
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == ds.images.size());
}

TEST_CASE("millidegree text formatting") {
    CHECK(format_millideg(2000) == "2");
    CHECK(format_millideg(500) == "0.5");
    CHECK(format_millideg(40125) == "40.125");
    CHECK(format_millideg(1500) == "1.5");
    CHECK(format_millideg(0) == "0");
}
