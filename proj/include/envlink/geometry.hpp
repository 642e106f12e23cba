#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>

#include "envlink/core.hpp"

namespace envlink {

// Axis-aligned box, closed on all faces.
struct Aabb {
    Vec3 lo;
    Vec3 hi;

    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
               p.z <= hi.z;
    }

    Vec3 center() const { return {(lo.x + hi.x) * 0.5, (lo.y + hi.y) * 0.5, (lo.z + hi.z) * 0.5}; }
    Vec3 size() const { return hi - lo; }

    friend bool operator==(const Aabb&, const Aabb&) = default;
};

namespace detail {

// Slab test over the parametric segment a + t*(b-a), t in [0,1].
// Returns the [t_enter, t_exit] overlap, or nullopt when the segment misses.
inline std::optional<std::pair<double, double>> segment_box_span(const Vec3& a, const Vec3& b,
                                                                 const Aabb& box) {
    double tmin = 0.0;
    double tmax = 1.0;
    const double av[3] = {a.x, a.y, a.z};
    const double bv[3] = {b.x, b.y, b.z};
    const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
    const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
    for (int i = 0; i < 3; ++i) {
        const double d = bv[i] - av[i];
        if (d == 0.0) {
            if (av[i] < lo[i] || av[i] > hi[i]) return std::nullopt;
            continue;
        }
        double t1 = (lo[i] - av[i]) / d;
        double t2 = (hi[i] - av[i]) / d;
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
        if (tmin > tmax) return std::nullopt;
    }
    return std::make_pair(tmin, tmax);
}

}  // namespace detail

// True iff the segment p0-p1 touches the closed box anywhere, endpoints included.
inline bool segment_intersects_box(const Vec3& p0, const Vec3& p1, const Aabb& box) {
    if (p0 == p1) throw std::invalid_argument("segment_intersects_box: degenerate segment");
    return detail::segment_box_span(p0, p1, box).has_value();
}

// Parametric entry point of the segment into the box, when it intersects.
inline std::optional<double> segment_box_entry(const Vec3& p0, const Vec3& p1, const Aabb& box) {
    const auto span = detail::segment_box_span(p0, p1, box);
    if (!span) return std::nullopt;
    return span->first;
}

}  // namespace envlink
