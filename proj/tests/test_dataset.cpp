#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <unordered_map>

#include "linepix/dataset.hpp"
#include "linepix/rng.hpp"

using namespace linepix;

namespace {

// Naive dedup oracle: hash every rasterization into a map keyed by the
// exact bit pattern, drop patterns whose generators disagree on the label.
struct NaiveSet {
    std::map<std::vector<std::uint64_t>, int> pattern_to_label;  // -1 = conflicted
    std::size_t conflicted = 0;
};

NaiveSet naive_generate(int dim, double step) {
    NaiveSet out;
    const std::uint32_t step_md = to_millideg(step);
    for (std::uint32_t amd = 0; amd < 180000; amd += step_md) {
        const double angle = from_millideg(amd);
        const int label = label_of_angle(angle);
        for (int length = 12; length <= dim - 2; ++length) {
            auto grid = rasterize_line({length, angle}, dim);
            auto [it, inserted] = out.pattern_to_label.try_emplace(grid.words(), label);
            if (!inserted && it->second != label && it->second != -1) {
                it->second = -1;
                ++out.conflicted;
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("dedup matches the naive pattern-set oracle at D=16, all steps") {
    for (double step : {0.5, 1.0, 2.0}) {
        CAPTURE(step);
        const auto ds = generate_dataset(16, step);
        const auto naive = naive_generate(16, step);

        std::size_t naive_kept = 0;
        for (const auto& [pattern, label] : naive.pattern_to_label)
            if (label != -1) ++naive_kept;
        CHECK(ds.images.size() == naive_kept);
        CHECK(ds.conflict_count == naive.conflicted);
        for (const auto& img : ds.images) {
            auto it = naive.pattern_to_label.find(img.bits.words());
            REQUIRE(it != naive.pattern_to_label.end());
            CHECK(it->second == img.label);
        }
    }
}

TEST_CASE("canonical points are minimal and images sorted") {
    const auto ds = generate_dataset(16, 2.0);
    for (std::size_t i = 1; i < ds.images.size(); ++i) {
        const auto& prev = ds.images[i - 1].canonical;
        const auto& cur = ds.images[i].canonical;
        const bool ordered = prev.angle_deg < cur.angle_deg ||
                             (prev.angle_deg == cur.angle_deg && prev.length_px < cur.length_px);
        CHECK(ordered);
    }
    // Canonicity: re-rasterizing the canonical point reproduces the pattern.
    for (const auto& img : ds.images)
        CHECK(rasterize_line(img.canonical, ds.dim) == img.bits);
}

TEST_CASE("n_alpha near alpha=0 for (16, 2.0)") {
    // At this resolution the exact-horizontal patterns are also generated
    // by angles past 170 degrees, i.e. from the other class, so both are
    // excluded as boundary-ambiguous; verified against the enumeration
    // oracle below. The nearest surviving angle keeps its two lattice
    // extents (lengths 12..14 collapse to two patterns).
    const auto ds = generate_dataset(16, 2.0);
    CHECK(ds.angle_index.count(0) == 0);
    CHECK(ds.conflict_count == 2);
    REQUIRE(ds.angle_index.count(2000));
    CHECK(ds.angle_index.at(2000).size() == 2);

    // The excluded horizontal pattern really is cross-class ambiguous.
    const auto horizontal = rasterize_line({14, 0.0}, 16);
    CHECK(rasterize_line({14, 178.0}, 16) == horizontal);
    CHECK(label_of_angle(0.0) != label_of_angle(178.0));
}

TEST_CASE("pairwise Hamming distance >= 2, exhaustive at D=16") {
    const auto ds = generate_dataset(16, 2.0);
    for (std::size_t i = 0; i < ds.images.size(); ++i)
        for (std::size_t j = i + 1; j < ds.images.size(); ++j) {
            const int dist = ds.images[i].bits.distance(ds.images[j].bits);
            CAPTURE(i, j);
            CHECK(dist >= 2);
        }
}

TEST_CASE("labels follow the canonical angle and conflicts are excluded") {
    const auto ds = generate_dataset(16, 2.0);
    for (const auto& img : ds.images)
        CHECK(img.label == label_of_angle(img.canonical.angle_deg));
    // This configuration is known to produce boundary-straddling duplicates.
    CHECK(ds.conflict_count > 0);
}

TEST_CASE("angle index partitions the image list") {
    const auto ds = generate_dataset(16, 1.0);
    std::size_t total = 0;
    for (const auto& [angle_md, ids] : ds.angle_index) {
        total += ids.size();
        for (auto id : ids)
            CHECK(to_millideg(ds.images[id].canonical.angle_deg) == angle_md);
    }
    CHECK(total == ds.images.size());
}

TEST_CASE("generation is deterministic") {
    const auto a = generate_dataset(16, 2.0);
    const auto b = generate_dataset(16, 2.0);
    CHECK(a.content_hash == b.content_hash);
    REQUIRE(a.images.size() == b.images.size());
    for (std::size_t i = 0; i < a.images.size(); ++i)
        CHECK(a.images[i].bits == b.images[i].bits);
}

TEST_CASE("invalid configurations are rejected") {
    CHECK_THROWS_AS(generate_dataset(15, 2.0), std::invalid_argument);  // odd
    CHECK_THROWS_AS(generate_dataset(8, 2.0), std::invalid_argument);   // too small
    CHECK_THROWS_AS(generate_dataset(16, 7.0), std::invalid_argument);  // 180 % 7 != 0
}

TEST_CASE("pattern index finds every image and no one-pixel variant") {
    const auto ds = generate_dataset(16, 2.0);
    const PatternIndex index(ds);
    Xoshiro256 rng(31337);
    for (const auto& img : ds.images) {
        CHECK(index.find(index.hash_of(img.bits), img.bits) == img.id);
        // A one-pixel variant can never be a dataset image (distance >= 2).
        BitGrid flipped = img.bits;
        const int r = static_cast<int>(rng.below(16)), c = static_cast<int>(rng.below(16));
        flipped.flip(r, c);
        CHECK(index.find(index.hash_of(flipped), flipped) == -1);
    }
}
