#include "meshcompose/geometry.hpp"

#include "meshcompose/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace meshcompose {

Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
    // Ericson, Real-Time Collision Detection, 5.1.5 (Voronoi regions).
    const Eigen::Vector3d ab = b - a;
    const Eigen::Vector3d ac = c - a;
    const Eigen::Vector3d ap = p - a;

    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Eigen::Vector3d bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return a + v * ab;
    }

    const Eigen::Vector3d cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return a + w * ac;
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + w * (c - b);
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    return a + ab * v + ac * w;
}

// ---------------------------------------------------------------------------
// Triangle/triangle overlap, Guigue & Devillers, "Fast and Robust
// Triangle-Triangle Overlap Test Using Orientation Predicates", JGT 8(1),
// 2003. Closed-set semantics: shared vertices/edges and coplanar contact
// all report true.
// ---------------------------------------------------------------------------

namespace {

using Eigen::Vector2d;
using Eigen::Vector3d;

double orient2d(const Vector2d& a, const Vector2d& b, const Vector2d& c) {
    return (a.x() - c.x()) * (b.y() - c.y()) - (a.y() - c.y()) * (b.x() - c.x());
}

bool intersection_test_vertex(const Vector2d& p1, const Vector2d& q1, const Vector2d& r1,
                              const Vector2d& p2, const Vector2d& q2, const Vector2d& r2) {
    if (orient2d(r2, p2, q1) >= 0.0) {
        if (orient2d(r2, q2, q1) <= 0.0) {
            if (orient2d(p1, p2, q1) > 0.0) {
                return orient2d(p1, q2, q1) <= 0.0;
            }
            if (orient2d(p1, p2, r1) >= 0.0) {
                return orient2d(q1, r1, p2) >= 0.0;
            }
            return false;
        }
        if (orient2d(p1, q2, q1) <= 0.0) {
            if (orient2d(r2, q2, r1) <= 0.0) {
                return orient2d(q1, r1, q2) >= 0.0;
            }
        }
        return false;
    }
    if (orient2d(r2, p2, r1) >= 0.0) {
        if (orient2d(q1, r1, r2) >= 0.0) {
            return orient2d(p1, p2, r1) >= 0.0;
        }
        if (orient2d(q1, r1, q2) >= 0.0) {
            return orient2d(r2, r1, q2) >= 0.0;
        }
    }
    return false;
}

bool intersection_test_edge(const Vector2d& p1, const Vector2d& q1, const Vector2d& r1,
                            const Vector2d& p2, const Vector2d& r2) {
    if (orient2d(r2, p2, q1) >= 0.0) {
        if (orient2d(p1, p2, q1) >= 0.0) {
            return orient2d(p1, q1, r2) >= 0.0;
        }
        if (orient2d(q1, r1, p2) >= 0.0) {
            return orient2d(r1, p1, p2) >= 0.0;
        }
        return false;
    }
    if (orient2d(r2, p2, r1) >= 0.0) {
        if (orient2d(p1, p2, r1) >= 0.0) {
            if (orient2d(p1, r1, r2) >= 0.0) return true;
            return orient2d(q1, r1, r2) >= 0.0;
        }
    }
    return false;
}

bool ccw_tri_tri_intersection_2d(const Vector2d& p1, const Vector2d& q1, const Vector2d& r1,
                                 const Vector2d& p2, const Vector2d& q2, const Vector2d& r2) {
    if (orient2d(p2, q2, p1) >= 0.0) {
        if (orient2d(q2, r2, p1) >= 0.0) {
            if (orient2d(r2, p2, p1) >= 0.0) return true;
            return intersection_test_edge(p1, q1, r1, p2, r2);
        }
        if (orient2d(r2, p2, p1) >= 0.0) {
            return intersection_test_edge(p1, q1, r1, r2, q2);
        }
        return intersection_test_vertex(p1, q1, r1, p2, q2, r2);
    }
    if (orient2d(q2, r2, p1) >= 0.0) {
        if (orient2d(r2, p2, p1) >= 0.0) {
            return intersection_test_edge(p1, q1, r1, q2, p2);
        }
        return intersection_test_vertex(p1, q1, r1, q2, r2, p2);
    }
    return intersection_test_vertex(p1, q1, r1, r2, p2, q2);
}

bool tri_tri_overlap_test_2d(const Vector2d& p1, const Vector2d& q1, const Vector2d& r1,
                             const Vector2d& p2, const Vector2d& q2, const Vector2d& r2) {
    if (orient2d(p1, q1, r1) < 0.0) {
        if (orient2d(p2, q2, r2) < 0.0) {
            return ccw_tri_tri_intersection_2d(p1, r1, q1, p2, r2, q2);
        }
        return ccw_tri_tri_intersection_2d(p1, r1, q1, p2, q2, r2);
    }
    if (orient2d(p2, q2, r2) < 0.0) {
        return ccw_tri_tri_intersection_2d(p1, q1, r1, p2, r2, q2);
    }
    return ccw_tri_tri_intersection_2d(p1, q1, r1, p2, q2, r2);
}

bool coplanar_tri_tri_3d(const Vector3d& p1, const Vector3d& q1, const Vector3d& r1,
                         const Vector3d& p2, const Vector3d& q2, const Vector3d& r2,
                         const Vector3d& normal) {
    // Project onto the coordinate plane that maximizes the footprint.
    const double nx = std::abs(normal.x());
    const double ny = std::abs(normal.y());
    const double nz = std::abs(normal.z());

    auto project = [&](const Vector3d& v) -> Vector2d {
        if (nx > nz && nx >= ny) return {v.z(), v.y()};
        if (ny > nz && ny >= nx) return {v.x(), v.z()};
        return {v.x(), v.y()};
    };
    // The first two projections swap p and q to preserve orientation,
    // matching the published routine.
    auto project_swapped = [&](const Vector3d& a, const Vector3d& b, const Vector3d& c,
                               Vector2d& pa, Vector2d& pb, Vector2d& pc) {
        if ((nx > nz && nx >= ny) || (ny > nz && ny >= nx)) {
            pa = project(b);
            pb = project(a);
            pc = project(c);
        } else {
            pa = project(a);
            pb = project(b);
            pc = project(c);
        }
    };

    Vector2d P1, Q1, R1, P2, Q2, R2;
    project_swapped(p1, q1, r1, P1, Q1, R1);
    project_swapped(p2, q2, r2, P2, Q2, R2);
    return tri_tri_overlap_test_2d(P1, Q1, R1, P2, Q2, R2);
}

bool check_min_max(const Vector3d& p1, const Vector3d& q1, const Vector3d& r1,
                   const Vector3d& p2, const Vector3d& q2, const Vector3d& r2) {
    Vector3d n1 = (p2 - q1).cross(p1 - q1);
    if ((q2 - q1).dot(n1) > 0.0) return false;
    n1 = (p2 - p1).cross(r1 - p1);
    return (r2 - p1).dot(n1) <= 0.0;
}

bool tri_tri_3d(const Vector3d& p1, const Vector3d& q1, const Vector3d& r1, const Vector3d& p2,
                const Vector3d& q2, const Vector3d& r2, double dp2, double dq2, double dr2,
                const Vector3d& n1) {
    if (dp2 > 0.0) {
        if (dq2 > 0.0) return check_min_max(p1, r1, q1, r2, p2, q2);
        if (dr2 > 0.0) return check_min_max(p1, r1, q1, q2, r2, p2);
        return check_min_max(p1, q1, r1, p2, q2, r2);
    }
    if (dp2 < 0.0) {
        if (dq2 < 0.0) return check_min_max(p1, q1, r1, r2, p2, q2);
        if (dr2 < 0.0) return check_min_max(p1, q1, r1, q2, r2, p2);
        return check_min_max(p1, r1, q1, p2, q2, r2);
    }
    if (dq2 < 0.0) {
        if (dr2 >= 0.0) return check_min_max(p1, r1, q1, q2, r2, p2);
        return check_min_max(p1, q1, r1, p2, q2, r2);
    }
    if (dq2 > 0.0) {
        if (dr2 > 0.0) return check_min_max(p1, r1, q1, p2, q2, r2);
        return check_min_max(p1, q1, r1, q2, r2, p2);
    }
    if (dr2 > 0.0) return check_min_max(p1, q1, r1, r2, p2, q2);
    if (dr2 < 0.0) return check_min_max(p1, r1, q1, r2, p2, q2);
    return coplanar_tri_tri_3d(p1, q1, r1, p2, q2, r2, n1);
}

} // namespace

bool triangle_triangle_intersect(const Eigen::Vector3d& a0, const Eigen::Vector3d& a1,
                                 const Eigen::Vector3d& a2, const Eigen::Vector3d& b0,
                                 const Eigen::Vector3d& b1, const Eigen::Vector3d& b2) {
    if (triangle_area(a0, a1, a2) <= 1e-14 || triangle_area(b0, b1, b2) <= 1e-14) {
        throw DegenerateTriangleError("triangle area below 1e-14");
    }

    const Vector3d n2 = (b0 - b2).cross(b1 - b2);
    const double dp1 = (a0 - b2).dot(n2);
    const double dq1 = (a1 - b2).dot(n2);
    const double dr1 = (a2 - b2).dot(n2);
    if (dp1 * dq1 > 0.0 && dp1 * dr1 > 0.0) return false;

    const Vector3d n1 = (a1 - a0).cross(a2 - a0);
    const double dp2 = (b0 - a2).dot(n1);
    const double dq2 = (b1 - a2).dot(n1);
    const double dr2 = (b2 - a2).dot(n1);
    if (dp2 * dq2 > 0.0 && dp2 * dr2 > 0.0) return false;

    if (dp1 > 0.0) {
        if (dq1 > 0.0) return tri_tri_3d(a2, a0, a1, b0, b2, b1, dp2, dr2, dq2, n1);
        if (dr1 > 0.0) return tri_tri_3d(a1, a2, a0, b0, b2, b1, dp2, dr2, dq2, n1);
        return tri_tri_3d(a0, a1, a2, b0, b1, b2, dp2, dq2, dr2, n1);
    }
    if (dp1 < 0.0) {
        if (dq1 < 0.0) return tri_tri_3d(a2, a0, a1, b0, b1, b2, dp2, dq2, dr2, n1);
        if (dr1 < 0.0) return tri_tri_3d(a1, a2, a0, b0, b1, b2, dp2, dq2, dr2, n1);
        return tri_tri_3d(a0, a1, a2, b0, b2, b1, dp2, dr2, dq2, n1);
    }
    if (dq1 < 0.0) {
        if (dr1 >= 0.0) return tri_tri_3d(a1, a2, a0, b0, b2, b1, dp2, dr2, dq2, n1);
        return tri_tri_3d(a0, a1, a2, b0, b1, b2, dp2, dq2, dr2, n1);
    }
    if (dq1 > 0.0) {
        if (dr1 > 0.0) return tri_tri_3d(a0, a1, a2, b0, b2, b1, dp2, dr2, dq2, n1);
        return tri_tri_3d(a1, a2, a0, b0, b1, b2, dp2, dq2, dr2, n1);
    }
    if (dr1 > 0.0) return tri_tri_3d(a2, a0, a1, b0, b1, b2, dp2, dq2, dr2, n1);
    if (dr1 < 0.0) return tri_tri_3d(a2, a0, a1, b0, b2, b1, dp2, dr2, dq2, n1);
    return coplanar_tri_tri_3d(a0, a1, a2, b0, b1, b2, n1);
}

int ray_triangle_parity_hit(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                            const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                            const Eigen::Vector3d& c) {
    // Moller-Trumbore with a degeneracy band: hits within 1e-9 of an
    // edge/vertex (in barycentric units) or of the origin make the parity
    // count unreliable and are reported for re-casting.
    constexpr double kBand = 1e-9;

    const Eigen::Vector3d e1 = b - a;
    const Eigen::Vector3d e2 = c - a;
    const Eigen::Vector3d pvec = dir.cross(e2);
    const double det = e1.dot(pvec);

    const double scale = e1.norm() * e2.norm();
    if (std::abs(det) <= kBand * scale) {
        // Near-parallel: either a grazing hit or a clean miss. Decide by
        // distance from the ray line to the triangle; treat as degenerate
        // only when the triangle comes close to the ray.
        const Eigen::Vector3d n = e1.cross(e2);
        const double dist_plane = std::abs((origin - a).dot(n));
        if (dist_plane <= kBand * std::max(1.0, n.norm())) {
            // Ray lies (numerically) in the triangle plane; degenerate if
            // the 2D projection comes near the triangle.
            return -1;
        }
        return 0;
    }

    const double inv_det = 1.0 / det;
    const Eigen::Vector3d tvec = origin - a;
    const double u = tvec.dot(pvec) * inv_det;
    if (u < -kBand || u > 1.0 + kBand) return 0;

    const Eigen::Vector3d qvec = tvec.cross(e1);
    const double v = dir.dot(qvec) * inv_det;
    if (v < -kBand || u + v > 1.0 + kBand) return 0;

    const double t = e2.dot(qvec) * inv_det;
    if (t < -kBand) return 0;

    const bool near_boundary = u < kBand || v < kBand || u + v > 1.0 - kBand;
    const bool near_origin = t < kBand;
    if (near_boundary || near_origin) return -1;
    return 1;
}

} // namespace meshcompose
