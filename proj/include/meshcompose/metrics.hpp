#pragma once

#include "meshcompose/mesh.hpp"
#include "meshcompose/sdf.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace meshcompose {

struct IntersectionReport {
    double r_surface = 0.0;
    double r_volume = 0.0;
    std::uint64_t n_samples = 0;
    std::uint64_t seed = 0;
    std::pair<int, int> intersecting_face_counts = {0, 0};
    double max_penetration_depth = 0.0;
};

struct SurfaceIntersection {
    double ratio = 0.0;
    std::vector<int> involved_a; // ascending face indices
    std::vector<int> involved_b;
};

// Fraction of surface area involved in triangle-triangle intersections:
// a face counts as involved as soon as it intersects any face of the other
// mesh; ratio = (involved area of A + involved area of B) / (area A + area B).
// Candidates are pruned with a BVH and decided by the exact predicate, so
// the involved sets equal the brute-force all-pairs result.
SurfaceIntersection surface_intersection_ratio(const TriangleMesh& a, const TriangleMesh& b);

// Monte Carlo volumetric overlap: n points uniform in the joint AABB,
// ratio = |inside A and B| / |inside A or B|. Inside tests use
// ray-crossing parity (3-ray majority). Deterministic per seed.
// Throws NoInteriorSamplesError when no sample lands in either mesh.
double volume_intersection_ratio(const TriangleMesh& a, const TriangleMesh& b,
                                 std::uint64_t n, std::uint64_t seed);

// max(0, max_p -phi(p)) over the cloud; 0 for an empty cloud.
double max_penetration_depth(const SdfGrid& grid, const PointCloud& points_of_b);
double max_penetration_depth(const DistanceField& field, const PointCloud& points_of_b);

} // namespace meshcompose
