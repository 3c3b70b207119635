#pragma once

// Complete deduplicated image sets for one (dim, angle step) configuration.
// Enumeration goes angle-ascending then length-ascending, so the first
// generator of a bit pattern is already the canonical (smallest angle, then
// smallest length) manifold point and the surviving images come out sorted.
//
// A pattern whose generators disagree on the class label has no usable
// ground truth; it is excluded from the set and counted in conflict_count.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "linepix/bitgrid.hpp"
#include "linepix/manifold.hpp"
#include "linepix/raster.hpp"

namespace linepix {

struct LineImage {
    std::uint32_t id = 0;
    int dim = 0;
    BitGrid bits;
    ManifoldPoint canonical;
    int label = 0;
    int popcount = 0;
};

struct Dataset {
    int dim = 0;
    std::uint32_t angle_step_millideg = 0;
    int length_min = 0;
    int length_max = 0;
    std::vector<LineImage> images;
    std::map<std::uint32_t, std::vector<std::uint32_t>> angle_index;  // millideg -> ids
    std::uint32_t conflict_count = 0;
    std::uint64_t content_hash = 0;

    double angle_step_deg() const { return from_millideg(angle_step_millideg); }
    std::size_t size() const { return images.size(); }

    std::vector<std::uint32_t> angle_grid_millideg() const {
        std::vector<std::uint32_t> grid;
        for (std::uint32_t a = 0; a < 180000; a += angle_step_millideg) grid.push_back(a);
        return grid;
    }
};

namespace detail {

struct Staged {
    BitGrid bits;
    ManifoldPoint canonical;
    std::uint32_t canonical_millideg;
    int label;
    bool conflicted;
};

}  // namespace detail

std::uint64_t dataset_digest(const Dataset& ds);  // defined in dataset_io.hpp

inline Dataset generate_dataset(int dim, double angle_step_deg) {
    if (dim < 16 || (dim % 2) != 0)
        throw std::invalid_argument("generate_dataset: dim must be even and >= 16");
    const std::uint32_t step_md = to_millideg(angle_step_deg);
    if (step_md == 0 || 180000 % step_md != 0)
        throw std::invalid_argument("generate_dataset: angle step must divide 180 evenly");

    const int length_min = 12;
    const int length_max = dim - 2;

    std::vector<detail::Staged> staged;
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> by_hash;
    ZobristHasher hasher(dim);

    for (std::uint32_t angle_md = 0; angle_md < 180000; angle_md += step_md) {
        const double angle = from_millideg(angle_md);
        const int label = label_of_angle(angle);
        for (int length = length_min; length <= length_max; ++length) {
            ManifoldPoint point{length, angle};
            BitGrid bits = rasterize_line(point, dim);
            const std::uint64_t h = hasher.hash(bits);

            std::uint32_t existing = UINT32_MAX;
            auto it = by_hash.find(h);
            if (it != by_hash.end()) {
                for (std::uint32_t idx : it->second)
                    if (staged[idx].bits == bits) { existing = idx; break; }
            }
            if (existing == UINT32_MAX) {
                staged.push_back({std::move(bits), point, angle_md, label, false});
                by_hash[h].push_back(static_cast<std::uint32_t>(staged.size() - 1));
            } else if (staged[existing].label != label) {
                staged[existing].conflicted = true;
            }
        }
    }

    Dataset ds;
    ds.dim = dim;
    ds.angle_step_millideg = step_md;
    ds.length_min = length_min;
    ds.length_max = length_max;
    for (auto& s : staged) {
        if (s.conflicted) {
            ++ds.conflict_count;
            continue;
        }
        LineImage img;
        img.id = static_cast<std::uint32_t>(ds.images.size());
        img.dim = dim;
        img.bits = std::move(s.bits);
        img.canonical = s.canonical;
        img.label = s.label;
        img.popcount = img.bits.popcount();
        ds.angle_index[s.canonical_millideg].push_back(img.id);
        ds.images.push_back(std::move(img));
    }
    if (ds.images.empty())
        throw std::runtime_error("generate_dataset: configuration produced no images");

    ds.content_hash = dataset_digest(ds);
    return ds;
}

// Zobrist lookup table over a dataset's bit patterns; answers "is this grid
// one of the dataset images" in O(1) per one-pixel variant.
class PatternIndex {
public:
    explicit PatternIndex(const Dataset& ds) : ds_(&ds), hasher_(ds.dim) {
        table_.reserve(ds.images.size() * 2);
        for (const auto& img : ds.images)
            table_.emplace(hasher_.hash(img.bits), img.id);
    }

    const ZobristHasher& hasher() const { return hasher_; }

    std::uint64_t hash_of(const BitGrid& g) const { return hasher_.hash(g); }

    // Returns the matching image id or -1. `h` must be the Zobrist hash of `g`.
    std::int64_t find(std::uint64_t h, const BitGrid& g) const {
        auto [lo, hi] = table_.equal_range(h);
        for (auto it = lo; it != hi; ++it)
            if (ds_->images[it->second].bits == g) return it->second;
        return -1;
    }

private:
    const Dataset* ds_;
    ZobristHasher hasher_;
    std::unordered_multimap<std::uint64_t, std::uint32_t> table_;
};

}  // namespace linepix

#include "linepix/dataset_io.hpp"
