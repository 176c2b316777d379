#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "caslayout/geometry.hpp"
#include "caslayout/rng.hpp"

namespace oracles {

using caslayout::geometry::Obb;
using caslayout::geometry::Segment2D;

/// Affine point set p(u) = origin + sum_k u_k axis_k with u in [0, 1]^dim.
struct Patch {
    std::array<double, 3> origin{};
    std::array<std::array<double, 3>, 3> axis{};
    int dim = 0;
};

inline Patch solid(const Obb& o) {
    const double c = std::cos(o.heading.degrees() * std::numbers::pi / 180.0);
    const double s = std::sin(o.heading.degrees() * std::numbers::pi / 180.0);
    Patch p;
    p.dim = 3;
    const double hx = o.size.x / 2, hy = o.size.y / 2, hz = o.size.z / 2;
    p.origin = {o.translation.x - c * hx + s * hy, o.translation.y - s * hx - c * hy, o.translation.z - hz};
    p.axis[0] = {c * o.size.x, s * o.size.x, 0};
    p.axis[1] = {-s * o.size.y, c * o.size.y, 0};
    p.axis[2] = {0, 0, o.size.z};
    return p;
}

/// Footprint of `o` (2D, z ignored).
inline Patch footprint(const Obb& o) {
    Patch p = solid(o);
    p.dim = 2;
    p.origin[2] = 0;
    return p;
}

inline Patch segment(const Segment2D& s) {
    Patch p;
    p.dim = 1;
    p.origin = {s.a.x, s.a.y, 0};
    p.axis[0] = {s.b.x - s.a.x, s.b.y - s.a.y, 0};
    return p;
}

/// min |P(u) - Q(v)| by accelerated projected gradient on the convex
/// quadratic; independent of the library's polygon code.
inline double patch_distance(const Patch& P, const Patch& Q, int iters = 20000) {
    const int n = P.dim + Q.dim;
    auto column = [&](int k) {
        return k < P.dim ? P.axis[k] : std::array<double, 3>{-Q.axis[k - P.dim][0], -Q.axis[k - P.dim][1], -Q.axis[k - P.dim][2]};
    };
    double lip = 0;
    for (int k = 0; k < n; ++k) {
        auto a = column(k);
        lip += a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
    }
    lip *= 2;
    auto residual = [&](const std::array<double, 6>& x) {
        std::array<double, 3> r{P.origin[0] - Q.origin[0], P.origin[1] - Q.origin[1], P.origin[2] - Q.origin[2]};
        for (int k = 0; k < n; ++k) {
            auto a = column(k);
            for (int d = 0; d < 3; ++d) r[d] += a[d] * x[k];
        }
        return r;
    };
    std::array<double, 6> x{}, y{}, prev{};
    x.fill(0.5);
    y = x;
    double t = 1;
    double best = INFINITY;
    for (int it = 0; it < iters; ++it) {
        auto r = residual(y);
        prev = x;
        for (int k = 0; k < n; ++k) {
            auto a = column(k);
            const double g = 2 * (a[0] * r[0] + a[1] * r[1] + a[2] * r[2]);
            x[k] = std::clamp(y[k] - g / lip, 0.0, 1.0);
        }
        const double tn = (1 + std::sqrt(1 + 4 * t * t)) / 2;
        for (int k = 0; k < n; ++k) y[k] = x[k] + (t - 1) / tn * (x[k] - prev[k]);
        t = tn;
        auto rx = residual(x);
        best = std::min(best, std::sqrt(rx[0] * rx[0] + rx[1] * rx[1] + rx[2] * rx[2]));
    }
    return best;
}

inline Obb random_obb(caslayout::Rng& rng, double spread = 3.0) {
    Obb o;
    o.size = {rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0)};
    o.translation = {rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(0.0, 1.5)};
    o.heading = caslayout::geometry::Heading::from_degrees(rng.uniform(-180.0, 180.0));
    return o;
}

}  // namespace oracles
