#pragma once

// Test-only rasterization oracle: a direct scalar enumeration of the sample
// points and the snapping rule, written without the library's helpers so a
// bug in either side shows up as a disagreement.

#include <cmath>
#include <set>
#include <utility>

#include "linepix/bitgrid.hpp"

namespace linepix::testsupport {

using PixelSet = std::set<std::pair<int, int>>;  // (row, col)

inline PixelSet oracle_line_pixels(int length, double angle_deg, int dim) {
    const double rad = angle_deg * 3.14159265358979323846 / 180.0;
    const double du = std::cos(rad);
    const double dv = -std::sin(rad);
    const double center = (dim - 1) / 2.0;
    const bool even = dim % 2 == 0;

    auto snap = [&](double w, double t) {
        double sgn;
        if (w > 0)
            sgn = 1;
        else if (w < 0)
            sgn = -1;
        else
            sgn = t > 0 ? 1 : -1;
        const double off = even ? sgn * (std::floor(std::fabs(w)) + 0.5)
                                : sgn * std::floor(std::fabs(w) + 0.5);
        return static_cast<int>(std::llround(center + off));
    };

    PixelSet pixels;
    if (even) {
        for (int j = 1; j <= length / 2; ++j)
            for (int s : {-1, 1}) {
                const double t = s * (j - 0.5);
                pixels.emplace(snap(t * dv, t), snap(t * du, t));
            }
    } else {
        for (int k = 0; k < length; ++k) {
            const double t = k - (length - 1) / 2.0;
            if (t == 0.0) {
                pixels.emplace(static_cast<int>(center), static_cast<int>(center));
                continue;
            }
            pixels.emplace(snap(t * dv, t), snap(t * du, t));
        }
    }
    return pixels;
}

inline PixelSet grid_pixels(const BitGrid& grid) {
    PixelSet pixels;
    for (int r = 0; r < grid.dim(); ++r)
        for (int c = 0; c < grid.dim(); ++c)
            if (grid.get(r, c)) pixels.emplace(r, c);
    return pixels;
}

}  // namespace linepix::testsupport
