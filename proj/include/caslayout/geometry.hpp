#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace caslayout::geometry {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec2 xy() const { return {x, y}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(Vec2 a, double k) { return {a.x * k, a.y * k}; }
inline Vec2 operator*(double k, Vec2 a) { return {a.x * k, a.y * k}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

/// Exact quarter turn (x, y) -> (-y, x).
inline Vec2 quarter_turn(Vec2 a) { return {-a.y, a.x}; }

/// Yaw angle stored as `quarter_turns * 90° + residual`.
///
/// The split makes 90° rotations exact on the (cos, sin) pair and keeps the
/// degree value printed to files reproducible: the residual is snapped to a
/// multiple of 2^-44 degrees, so `90 q + r` is always representable and
/// `from_degrees(h.degrees()) == h` holds bit-for-bit.
class Heading {
public:
    Heading() = default;

    static Heading from_degrees(double degrees);
    /// Angle of the (unnormalized) direction vector (c, s).
    static Heading from_vector(double c, double s);

    /// Angle in (-180, 180].
    double degrees() const;
    double cos() const { return dir_.x; }
    double sin() const { return dir_.y; }
    Vec2 direction() const { return dir_; }

    Heading rotated_quarter_turns(int k) const;

    int quarter_turns() const { return quarter_; }
    double residual_degrees() const { return residual_; }

    friend bool operator==(const Heading& a, const Heading& b) {
        return a.quarter_ == b.quarter_ && a.residual_ == b.residual_;
    }

private:
    Heading(int quarter, double residual);

    int quarter_ = 0;
    double residual_ = 0.0;
    Vec2 dir_{1.0, 0.0};
};

/// Upright oriented box. Local +x is "left", local +y is "front", +z up.
/// `translation` is the box center relative to the room center.
struct Obb {
    Vec3 size;
    Vec3 translation;
    Heading heading;

    Vec2 rotation() const { return heading.direction(); }
    Vec2 center_xy() const { return translation.xy(); }
    double half_x() const { return 0.5 * size.x; }
    double half_y() const { return 0.5 * size.y; }
    double z_min() const { return translation.z - 0.5 * size.z; }
    double z_max() const { return translation.z + 0.5 * size.z; }

    /// Footprint corners, counter-clockwise.
    std::array<Vec2, 4> corners() const;
    /// World point -> box-local (x, y).
    Vec2 to_local(Vec2 p) const;

    bool valid() const;

    friend bool operator==(const Obb&, const Obb&) = default;
};

struct Segment2D {
    Vec2 a;
    Vec2 b;
    Vec2 normal;  // unit, toward room interior

    bool valid() const;
};

struct Frame2D {
    Vec2 xhat;
    Vec2 yhat;
};

Frame2D local_frame(const Obb& o);

/// Architectural element as a wall-plane segment: its local x extent through
/// the center, with the local +y axis as interior normal.
Segment2D segment_of(const Obb& o);

double min_distance_obb(const Obb& a, const Obb& b);
double min_distance_obb_segment(const Obb& o, const Segment2D& s);
double iou_3d(const Obb& a, const Obb& b);
bool footprint_contains(const Obb& o, Vec2 p);

// 2D helpers shared with the evaluation code.
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);
bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d);
bool convex_contains(std::span<const Vec2> ccw, Vec2 p);
bool convex_intersect(std::span<const Vec2> a, std::span<const Vec2> b);
double convex_distance(std::span<const Vec2> a, std::span<const Vec2> b);
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);
double polygon_area(std::span<const Vec2> poly);
bool point_in_polygon(std::span<const Vec2> poly, Vec2 p);

}  // namespace caslayout::geometry
