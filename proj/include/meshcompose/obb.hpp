#pragma once

#include "meshcompose/mesh.hpp"

#include <Eigen/Core>

namespace meshcompose {

// Oriented bounding box from covariance PCA. Axes are orthonormal and
// right-handed; half_extents are sorted descending with axes permuted to
// match.
struct Obb {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Matrix3d axes = Eigen::Matrix3d::Identity(); // columns are directions
    Eigen::Vector3d half_extents = Eigen::Vector3d::Zero();
};

// PCA box: axes = covariance eigenvectors, extents = half-ranges of the
// projections. Axis signs are fixed by making each axis's
// largest-magnitude component positive (earliest component on ties); the
// third axis is then rebuilt as the cross product so the frame stays
// right-handed. Degenerate inputs (a single point, collinear points)
// yield zero extents in the flat directions.
Obb compute_obb(const PointCloud& points);

// Initial scale factor between two OBBs: geometric mean of
// target.half_extents[i] / source.half_extents[i] over axes where the
// source extent exceeds 1e-12. Throws DegenerateSourceError when no axis
// qualifies.
double estimate_scale_from_obb(const Obb& source, const Obb& target);

} // namespace meshcompose
