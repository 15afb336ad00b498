#pragma once

#include "meshcompose/mesh.hpp"

#include <Eigen/Core>

namespace meshcompose {

// Watertight primitive meshes used by the synthetic benchmark generator
// and the test suites.

// subdivisions > 1 grids each face so face areas are comparable to the
// other primitives' (face-count-based degradations then track area).
TriangleMesh make_box(const Eigen::Vector3d& extents,
                      const Eigen::Vector3d& center = Eigen::Vector3d::Zero(),
                      int subdivisions = 1);

// Icosahedron subdivided `level` times and projected to the sphere
// (level 4 = 5120 faces).
TriangleMesh make_icosphere(double radius, int level,
                            const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

// Closed cylinder along +z with fan-triangulated caps.
TriangleMesh make_cylinder(double radius, double height, int segments,
                           const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

// Concatenates meshes into one (indices offset). Inputs are expected to be
// pairwise disjoint so parity-based inside tests stay valid.
TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts);

} // namespace meshcompose
