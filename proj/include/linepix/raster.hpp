#pragma once

// Line rasterization. A line of length L at angle a is point-sampled along
// its direction, centered on the continuous image center
// c = ((D-1)/2, (D-1)/2):
//
//   p = c + t * (cos a, -sin a)
//
// The sample parameters t live on the same lattice as the pixel-center
// offsets from c. On even grids the pixel centers sit at half-integer
// offsets, so t runs over +-(j - 0.5) for j = 1..floor(L/2); on odd grids
// they sit at integer offsets and t runs over k - (L-1)/2 for k = 0..L-1.
//
// Each coordinate offset is snapped to the nearest lattice offset, ties
// resolved away from zero: sign(w) * (floor(|w|) + 0.5) on even grids,
// round-half-away-from-zero on odd grids. A zero offset component has no
// sign of its own and inherits the sign of the parameter t, which keeps the
// two half-lines mirrored (an axis-aligned line occupies the two central
// rows/columns as staggered halves). On odd grids the t = 0 sample is the
// center pixel, its own mirror.
//
// Every resulting pattern is exactly point-symmetric about c, which is what
// makes two distinct patterns differ in at least 2 pixels on even grids.
// Consequences of the lattice choice on even grids: lengths 2m and 2m+1
// span the same lattice points and rasterize identically, and popcount
// never exceeds L. Bresenham-style rasterizers guarantee none of this for
// arbitrary endpoints, which is why sampling is used instead.

#include <cmath>
#include <stdexcept>

#include "linepix/bitgrid.hpp"
#include "linepix/manifold.hpp"

namespace linepix {

namespace detail {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

// Snap one signed center offset to a pixel index. The parameter sign breaks
// the w == 0 tie; t is never 0 on even grids.
inline int snap_offset(double w, double t, bool even_dim, double center, int dim) {
    double sgn = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : (t > 0.0 ? 1.0 : -1.0));
    double snapped = even_dim ? sgn * (std::floor(std::fabs(w)) + 0.5)
                              : sgn * std::floor(std::fabs(w) + 0.5);
    int p = static_cast<int>(std::lround(center + snapped));
    if (p < 0 || p >= dim) throw std::logic_error("rasterize_line: sample left the grid");
    return p;
}

struct SampleGrid {
    double first;  // smallest t
    double step;   // always 1
    int count;
};

inline SampleGrid sample_params(int length, bool even_dim) {
    if (even_dim) {
        int m = length / 2;
        return {-(m - 0.5), 1.0, 2 * m};
    }
    return {-(length - 1) / 2.0, 1.0, length};
}

}  // namespace detail

inline BitGrid rasterize_line(const ManifoldPoint& point, int dim) {
    if (dim < 4) throw std::invalid_argument("rasterize_line: dim must be >= 4");
    if (point.length_px < 1 || point.length_px > dim - 2)
        throw std::invalid_argument("rasterize_line: length must be in [1, dim-2]");
    if (point.angle_deg < 0.0 || point.angle_deg >= 180.0)
        throw std::invalid_argument("rasterize_line: angle must be in [0, 180)");

    const double center = (dim - 1) / 2.0;
    const bool even_dim = (dim % 2) == 0;
    const double dir_col = std::cos(point.angle_deg * detail::kDegToRad);
    const double dir_row = -std::sin(point.angle_deg * detail::kDegToRad);
    const auto grid_params = detail::sample_params(point.length_px, even_dim);

    BitGrid grid(dim);
    for (int k = 0; k < grid_params.count; ++k) {
        double t = grid_params.first + k;
        if (!even_dim && t == 0.0) {
            grid.set(static_cast<int>(center), static_cast<int>(center));
            continue;
        }
        int col = detail::snap_offset(t * dir_col, t, even_dim, center, dim);
        int row = detail::snap_offset(t * dir_row, t, even_dim, center, dim);
        grid.set(row, col);
    }
    return grid;
}

// Pixels of the outermost two samples; used for the heatmap endpoint markers.
struct LineEndpoints {
    int row0, col0, row1, col1;
};

inline LineEndpoints line_endpoints(const ManifoldPoint& point, int dim) {
    if (point.length_px < 2) throw std::invalid_argument("line_endpoints: length must be >= 2");
    const double center = (dim - 1) / 2.0;
    const bool even_dim = (dim % 2) == 0;
    const double dir_col = std::cos(point.angle_deg * detail::kDegToRad);
    const double dir_row = -std::sin(point.angle_deg * detail::kDegToRad);
    const auto grid_params = detail::sample_params(point.length_px, even_dim);
    const double t_last = grid_params.first + (grid_params.count - 1);

    LineEndpoints e{};
    e.col0 = detail::snap_offset(-t_last * dir_col, -t_last, even_dim, center, dim);
    e.row0 = detail::snap_offset(-t_last * dir_row, -t_last, even_dim, center, dim);
    e.col1 = detail::snap_offset(t_last * dir_col, t_last, even_dim, center, dim);
    e.row1 = detail::snap_offset(t_last * dir_row, t_last, even_dim, center, dim);
    return e;
}

}  // namespace linepix
