#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <limits>

namespace meshcompose {

struct Aabb {
    Eigen::Vector3d min = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d max = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());

    void expand(const Eigen::Vector3d& p) {
        min = min.cwiseMin(p);
        max = max.cwiseMax(p);
    }
    void expand(const Aabb& other) {
        min = min.cwiseMin(other.min);
        max = max.cwiseMax(other.max);
    }
    bool valid() const { return (min.array() <= max.array()).all(); }
    Eigen::Vector3d center() const { return 0.5 * (min + max); }
    Eigen::Vector3d extent() const { return max - min; }
    double diagonal() const { return valid() ? (max - min).norm() : 0.0; }

    // Closed-set overlap: touching boxes count.
    bool overlaps(const Aabb& other) const {
        return (min.array() <= other.max.array()).all() &&
               (other.min.array() <= max.array()).all();
    }
    bool contains(const Eigen::Vector3d& p) const {
        return (min.array() <= p.array()).all() && (p.array() <= max.array()).all();
    }
    // Squared distance from p to the box (0 inside).
    double squared_distance(const Eigen::Vector3d& p) const {
        const Eigen::Vector3d d = (min - p).cwiseMax(p - max).cwiseMax(0.0);
        return d.squaredNorm();
    }
    Eigen::Vector3d clamp(const Eigen::Vector3d& p) const {
        return p.cwiseMax(min).cwiseMin(max);
    }
};

inline double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                            const Eigen::Vector3d& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

// Closest point on the closed triangle (a,b,c) to p.
// Ericson, Real-Time Collision Detection, 5.1.5.
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p,
                                          const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b,
                                          const Eigen::Vector3d& c);

// Exact intersection test between two closed triangles: shared vertices,
// shared edges, and coplanar overlap all report true.
// Throws DegenerateTriangleError if either triangle has area <= 1e-14.
bool triangle_triangle_intersect(const Eigen::Vector3d& a0, const Eigen::Vector3d& a1,
                                 const Eigen::Vector3d& a2, const Eigen::Vector3d& b0,
                                 const Eigen::Vector3d& b1, const Eigen::Vector3d& b2);

// Ray/triangle hit for parity counting. Returns +1 for a clean crossing at
// t > 0, 0 for a miss, and -1 for a degenerate grazing hit (within 1e-9 of
// an edge, vertex, or the ray origin) that the caller should re-cast.
int ray_triangle_parity_hit(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                            const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                            const Eigen::Vector3d& c);

} // namespace meshcompose
