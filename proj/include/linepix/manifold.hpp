#pragma once

// The generation manifold: a line is a (length, angle) pair. Angles live in
// [0, 180) degrees because a centered undirected line is invariant under a
// 180-degree rotation; a larger domain would only create duplicate patterns
// whose generating angles disagree on the class.

#include <cstdint>
#include <stdexcept>

namespace linepix {

struct ManifoldPoint {
    int length_px = 0;
    double angle_deg = 0.0;

    bool operator==(const ManifoldPoint&) const = default;
};

// Class rule: y = 1 iff angle in [0, 40] degrees, inclusive at both ends.
inline int label_of_angle(double angle_deg) {
    if (angle_deg < 0.0 || angle_deg >= 180.0)
        throw std::invalid_argument("label_of_angle: angle must be in [0, 180)");
    return (angle_deg >= 0.0 && angle_deg <= 40.0) ? 1 : 0;
}

// Angular distance (degrees) from the decision boundary at 0 or 40 degrees,
// on the circle of undirected line angles (period 180).
inline double boundary_distance_deg(double angle_deg) {
    auto circ = [](double a, double b) {
        double d = a - b;
        while (d < -90.0) d += 180.0;
        while (d > 90.0) d -= 180.0;
        return d < 0 ? -d : d;
    };
    double d0 = circ(angle_deg, 0.0);
    double d40 = circ(angle_deg, 40.0);
    return d0 < d40 ? d0 : d40;
}

// Angles are carried through files as integer millidegrees to keep text and
// binary outputs exact.
inline std::uint32_t to_millideg(double angle_deg) {
    double scaled = angle_deg * 1000.0;
    auto md = static_cast<std::int64_t>(scaled + (scaled >= 0 ? 0.5 : -0.5));
    return static_cast<std::uint32_t>(md);
}

inline double from_millideg(std::uint32_t md) {
    return static_cast<double>(md) / 1000.0;
}

}  // namespace linepix
