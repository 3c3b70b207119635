#include <catch2/catch_amalgamated.hpp>

#include "linepix/raster.hpp"
#include "linepix/rng.hpp"
#include "support/raster_oracle.hpp"

using namespace linepix;
using namespace linepix::testsupport;

namespace {

PixelSet raster_pixels(int length, double angle, int dim) {
    return grid_pixels(rasterize_line({length, angle}, dim));
}

bool point_symmetric(const BitGrid& g) {
    const int d = g.dim();
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
            if (g.get(r, c) != g.get(d - 1 - r, d - 1 - c)) return false;
    return true;
}

}  // namespace

TEST_CASE("frozen pixel sets (computed by the enumeration oracle)") {
    // 45-degree line, odd length, 16x16.
    CHECK(raster_pixels(13, 45.0, 16) ==
          PixelSet{{4, 11}, {5, 10}, {6, 9}, {7, 8}, {8, 7}, {9, 6}, {10, 5}, {11, 4}});
    // Axis-aligned lines occupy the two central rows/cols as mirrored halves.
    CHECK(raster_pixels(14, 0.0, 16) ==
          PixelSet{{7, 1}, {7, 2}, {7, 3}, {7, 4}, {7, 5}, {7, 6}, {7, 7},
                   {8, 8}, {8, 9}, {8, 10}, {8, 11}, {8, 12}, {8, 13}, {8, 14}});
    CHECK(raster_pixels(12, 90.0, 16) ==
          PixelSet{{2, 8}, {3, 8}, {4, 8}, {5, 8}, {6, 8}, {7, 8},
                   {8, 7}, {9, 7}, {10, 7}, {11, 7}, {12, 7}, {13, 7}});
    // Odd grid: integer offsets, center pixel used.
    CHECK(raster_pixels(7, 0.0, 17) ==
          PixelSet{{8, 5}, {8, 6}, {8, 7}, {8, 8}, {8, 9}, {8, 10}, {8, 11}});
}

TEST_CASE("axis-aligned popcounts") {
    CHECK(rasterize_line({14, 0.0}, 16).popcount() == 14);
    CHECK(rasterize_line({12, 90.0}, 16).popcount() == 12);
    // Odd length on an even grid spans the same lattice as length-1.
    CHECK(rasterize_line({13, 0.0}, 16) == rasterize_line({12, 0.0}, 16));
}

TEST_CASE("oracle agreement over random manifold points") {
    Xoshiro256 rng(0xfeedULL);
    for (int dim : {16, 32, 48, 17}) {
        for (int trial = 0; trial < 200; ++trial) {
            const int length = 2 + static_cast<int>(rng.below(dim - 3));
            const double angle = rng.uniform() * 180.0;
            if (angle >= 180.0) continue;
            const auto grid = rasterize_line({length, angle}, dim);
            CAPTURE(dim, length, angle);
            CHECK(grid_pixels(grid) == oracle_line_pixels(length, angle, dim));
        }
    }
}

TEST_CASE("every rasterization is point-symmetric with 1 <= popcount <= L") {
    Xoshiro256 rng(0xace5ULL);
    for (int dim : {16, 32, 80}) {
        for (int trial = 0; trial < 300; ++trial) {
            const int length = 12 + static_cast<int>(rng.below(dim - 13));
            const double angle = rng.uniform() * 180.0;
            const auto grid = rasterize_line({length, angle}, dim);
            CAPTURE(dim, length, angle);
            CHECK(point_symmetric(grid));
            CHECK(grid.popcount() >= 1);
            CHECK(grid.popcount() <= length);
        }
    }
}

TEST_CASE("rasterize rejects invalid input") {
    CHECK_THROWS_AS(rasterize_line({15, 0.0}, 16), std::invalid_argument);   // L > D-2
    CHECK_THROWS_AS(rasterize_line({0, 0.0}, 16), std::invalid_argument);    // L < 1
    CHECK_THROWS_AS(rasterize_line({12, -1.0}, 16), std::invalid_argument);  // angle < 0
    CHECK_THROWS_AS(rasterize_line({12, 180.0}, 16), std::invalid_argument);
    CHECK_THROWS_AS(rasterize_line({1, 0.0}, 2), std::invalid_argument);     // dim < 4
}

TEST_CASE("line endpoints are pixels of the line") {
    Xoshiro256 rng(0xe9dULL);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 16 + 4 * static_cast<int>(rng.below(17));
        const int length = 12 + static_cast<int>(rng.below(dim - 13));
        const double angle = rng.uniform() * 180.0;
        const auto grid = rasterize_line({length, angle}, dim);
        const auto e = line_endpoints({length, angle}, dim);
        CAPTURE(dim, length, angle);
        CHECK(grid.get(e.row0, e.col0));
        CHECK(grid.get(e.row1, e.col1));
        // Endpoints are mirror images of each other.
        CHECK(e.row0 == dim - 1 - e.row1);
        CHECK(e.col0 == dim - 1 - e.col1);
    }
}
