#pragma once

#include <cmath>

namespace octsim {

// Coordinate convention used throughout: x runs along a B-scan (fast lateral
// axis), y across the B-scan stack (slow lateral axis), z is depth into the
// tissue. All positions are micrometers.
struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
    friend Vec3 operator*(Vec3 v, double s) { return s * v; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(Vec3 v) {
    const double n = norm(v);
    return {v.x / n, v.y / n, v.z / n};
}

// Distance from point p to the infinite line through q with unit direction u.
inline double point_line_distance(Vec3 p, Vec3 q, Vec3 u) {
    const Vec3 d = p - q;
    const double along = dot(d, u);
    const double rad2 = dot(d, d) - along * along;
    return rad2 > 0.0 ? std::sqrt(rad2) : 0.0;
}

}  // namespace octsim
