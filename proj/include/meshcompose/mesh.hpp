#pragma once

#include "meshcompose/transform.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace meshcompose {

// Indexed triangle surface. Immutable by convention once built: every
// operation takes it by const reference and returns new data.
struct TriangleMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<double> face_areas; // filled by finalize()

    double total_area = 0.0;

    // Recomputes per-face areas and validates the structural invariants:
    // indices in range, no repeated index within a face.
    // Throws UnsupportedFormatError on bad indices.
    void finalize();

    // AABB of the vertex set as (min, max).
    std::pair<Eigen::Vector3d, Eigen::Vector3d> bounding_box() const;
    double bounding_diagonal() const;

    Eigen::Vector3d face_vertex(int face, int corner) const {
        return vertices[static_cast<size_t>(faces[static_cast<size_t>(face)][static_cast<size_t>(corner)])];
    }
};

struct PointCloud {
    std::vector<Eigen::Vector3d> points;
    std::vector<int> source_faces; // empty or one entry per point

    size_t size() const { return points.size(); }
    std::pair<Eigen::Vector3d, Eigen::Vector3d> bounding_box() const;
    double bounding_diagonal() const;
};

// Loads a triangulated mesh from OBJ or PLY (ascii or binary little-endian).
// Polygons with more than 3 vertices are fan-triangulated; faces with
// repeated vertex indices are dropped. Throws FileNotFoundError,
// UnsupportedFormatError, or DegenerateMeshError (zero total area).
TriangleMesh load_mesh(const std::string& path);

void save_obj(const TriangleMesh& mesh, const std::string& path);

// Writes several meshes into one OBJ with a `g <name>` group per entry.
void save_obj_groups(const std::vector<std::pair<std::string, TriangleMesh>>& groups,
                     const std::string& path);

// n points uniform over the surface: face index drawn proportional to area,
// then a uniform barycentric sample. Point i depends only on
// (mesh, seed, i), so the output is bit-identical for identical inputs.
PointCloud sample_surface(const TriangleMesh& mesh, size_t n, std::uint64_t seed);

TriangleMesh transform_mesh(const TriangleMesh& mesh, const SimilarityTransform& t);

PointCloud transform_cloud(const PointCloud& cloud, const SimilarityTransform& t);

} // namespace meshcompose
