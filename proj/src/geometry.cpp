#include "caslayout/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

namespace caslayout::geometry {

namespace {

constexpr double kResidualGrid = 17592186044416.0;  // 2^44

double snap_residual(double r) { return std::round(r * kResidualGrid) / kResidualGrid; }

int wrap_quarter(long long q) { return static_cast<int>(((q % 4) + 4) % 4); }

}  // namespace

Heading::Heading(int quarter, double residual) : quarter_(wrap_quarter(quarter)), residual_(residual) {
    const double rad = residual_ * (std::numbers::pi / 180.0);
    Vec2 d{std::cos(rad), std::sin(rad)};
    for (int i = 0; i < quarter_; ++i) d = quarter_turn(d);
    dir_ = d;
}

Heading Heading::from_degrees(double degrees) {
    const long long q = std::llround(degrees / 90.0);
    // Exact by Sterbenz: |degrees - 90 q| <= 45 with 90 q of the same sign.
    const double r = degrees - 90.0 * static_cast<double>(q);
    return Heading(wrap_quarter(q), snap_residual(r));
}

Heading Heading::from_vector(double c, double s) {
    return from_degrees(std::atan2(s, c) * (180.0 / std::numbers::pi));
}

double Heading::degrees() const {
    switch (quarter_) {
        case 0: return residual_;
        case 1: return 90.0 + residual_;
        case 2: return residual_ <= 0.0 ? 180.0 + residual_ : -180.0 + residual_;
        default: return -90.0 + residual_;
    }
}

Heading Heading::rotated_quarter_turns(int k) const { return Heading(quarter_ + k, residual_); }

std::array<Vec2, 4> Obb::corners() const {
    const Vec2 c = center_xy();
    const Frame2D f = local_frame(*this);
    const double hx = half_x();
    const double hy = half_y();
    const Vec2 ex = f.xhat * hx;
    const Vec2 ey = f.yhat * hy;
    return {c - ex - ey, c + ex - ey, c + ex + ey, c - ex + ey};
}

Vec2 Obb::to_local(Vec2 p) const {
    const Frame2D f = local_frame(*this);
    const Vec2 d = p - center_xy();
    return {dot(d, f.xhat), dot(d, f.yhat)};
}

bool Obb::valid() const {
    const Vec2 r = rotation();
    return size.x > 0.0 && size.y > 0.0 && size.z > 0.0 && std::abs(r.x * r.x + r.y * r.y - 1.0) <= 1e-9 &&
           std::isfinite(translation.x) && std::isfinite(translation.y) && std::isfinite(translation.z);
}

bool Segment2D::valid() const {
    const Vec2 d = b - a;
    if (d.x == 0.0 && d.y == 0.0) return false;
    return std::abs(dot(d, normal)) <= 1e-9 * norm(d) && std::abs(norm(normal) - 1.0) <= 1e-9;
}

Frame2D local_frame(const Obb& o) {
    const Vec2 x = o.rotation();
    return {x, quarter_turn(x)};
}

Segment2D segment_of(const Obb& o) {
    const Frame2D f = local_frame(o);
    const Vec2 c = o.center_xy();
    const Vec2 ex = f.xhat * o.half_x();
    return {c - ex, c + ex, f.yhat};
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return norm(p - (a + ab * t));
}

namespace {

int orientation_sign(Vec2 a, Vec2 b, Vec2 c) {
    const double v = cross(b - a, c - a);
    return (v > 0.0) - (v < 0.0);
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

}  // namespace

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    const int o1 = orientation_sign(a, b, c);
    const int o2 = orientation_sign(a, b, d);
    const int o3 = orientation_sign(c, d, a);
    const int o4 = orientation_sign(c, d, b);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

bool convex_contains(std::span<const Vec2> ccw, Vec2 p) {
    const std::size_t n = ccw.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = ccw[i];
        const Vec2 b = ccw[(i + 1) % n];
        if (cross(b - a, p - a) < 0.0) return false;
    }
    return true;
}

namespace {

// Closed-set separating axis test along the normal of edge (a, b).
bool separated_along(Vec2 axis, std::span<const Vec2> a, std::span<const Vec2> b) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (Vec2 p : a) {
        const double v = dot(p, axis);
        amin = std::min(amin, v);
        amax = std::max(amax, v);
    }
    for (Vec2 p : b) {
        const double v = dot(p, axis);
        bmin = std::min(bmin, v);
        bmax = std::max(bmax, v);
    }
    return amax < bmin || bmax < amin;
}

}  // namespace

bool convex_intersect(std::span<const Vec2> a, std::span<const Vec2> b) {
    for (auto poly : {a, b}) {
        const std::size_t n = poly.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 e = poly[(i + 1) % n] - poly[i];
            if (separated_along(quarter_turn(e), a, b)) return false;
        }
    }
    return true;
}

double convex_distance(std::span<const Vec2> a, std::span<const Vec2> b) {
    if (convex_intersect(a, b)) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < 2; ++pass) {
        auto pts = pass == 0 ? a : b;
        auto poly = pass == 0 ? b : a;
        const std::size_t n = poly.size();
        for (Vec2 p : pts)
            for (std::size_t i = 0; i < n; ++i)
                best = std::min(best, point_segment_distance(p, poly[i], poly[(i + 1) % n]));
    }
    return best;
}

double polygon_area(std::span<const Vec2> poly) {
    const std::size_t n = poly.size();
    if (n < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t i = 0; i < n; ++i) twice += cross(poly[i], poly[(i + 1) % n]);
    return 0.5 * std::abs(twice);
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
    std::vector<Vec2> out(subject.begin(), subject.end());
    const std::size_t n = clip.size();
    for (std::size_t i = 0; i < n && !out.empty(); ++i) {
        const Vec2 a = clip[i];
        const Vec2 b = clip[(i + 1) % n];
        const Vec2 e = b - a;
        std::vector<Vec2> input;
        input.swap(out);
        const std::size_t m = input.size();
        for (std::size_t j = 0; j < m; ++j) {
            const Vec2 p = input[j];
            const Vec2 q = input[(j + 1) % m];
            const double sp = cross(e, p - a);
            const double sq = cross(e, q - a);
            if (sp >= 0.0) out.push_back(p);
            if ((sp >= 0.0) != (sq >= 0.0)) {
                const double t = sp / (sp - sq);
                out.push_back(p + (q - p) * t);
            }
        }
    }
    return out;
}

bool point_in_polygon(std::span<const Vec2> poly, Vec2 p) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = poly[i];
        const Vec2 b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

double min_distance_obb(const Obb& a, const Obb& b) {
    const auto ca = a.corners();
    const auto cb = b.corners();
    const double dxy = convex_distance(ca, cb);
    const double dz = std::max({0.0, a.z_min() - b.z_max(), b.z_min() - a.z_max()});
    if (dz == 0.0) return dxy;
    if (dxy == 0.0) return dz;
    return std::sqrt(dxy * dxy + dz * dz);
}

double min_distance_obb_segment(const Obb& o, const Segment2D& s) {
    const auto c = o.corners();
    if (convex_contains(c, s.a) || convex_contains(c, s.b)) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 4; ++i) {
        const Vec2 p = c[i];
        const Vec2 q = c[(i + 1) % 4];
        if (segments_intersect(p, q, s.a, s.b)) return 0.0;
        best = std::min({best, point_segment_distance(p, s.a, s.b), point_segment_distance(s.a, p, q),
                         point_segment_distance(s.b, p, q)});
    }
    return best;
}

double iou_3d(const Obb& a, const Obb& b) {
    const double zov = std::min(a.z_max(), b.z_max()) - std::max(a.z_min(), b.z_min());
    if (zov <= 0.0) return 0.0;
    const auto ca = a.corners();
    const auto cb = b.corners();
    const auto poly = clip_convex(ca, cb);
    const double area = polygon_area(poly);
    if (area <= 0.0) return 0.0;
    const double inter = area * zov;
    const double va = a.size.x * a.size.y * a.size.z;
    const double vb = b.size.x * b.size.y * b.size.z;
    const double uni = va + vb - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

bool footprint_contains(const Obb& o, Vec2 p) {
    constexpr double kTol = 1e-9;
    const Vec2 l = o.to_local(p);
    return std::abs(l.x) <= o.half_x() + kTol && std::abs(l.y) <= o.half_y() + kTol;
}

}  // namespace caslayout::geometry
