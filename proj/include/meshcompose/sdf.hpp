#pragma once

#include "meshcompose/geometry.hpp"
#include "meshcompose/mesh.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace meshcompose {

struct FieldSample {
    double value = 0.0;
    Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
};

// Anything the collision optimizer can query: value + gradient at a point.
class DistanceField {
public:
    virtual ~DistanceField() = default;
    virtual FieldSample sample(const Eigen::Vector3d& p) const = 0;
};

// Dense signed distance grid. Values are stored as f32 at lattice points
// (x-fastest ordering), negative inside the surface.
struct SdfGrid {
    Eigen::Vector3d origin = Eigen::Vector3d::Zero(); // min lattice corner
    double spacing = 1.0;                             // uniform voxel edge
    std::array<std::uint32_t, 3> dims = {2, 2, 2};    // samples per axis
    std::vector<float> values;                        // dims[0]*dims[1]*dims[2]

    size_t index(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return static_cast<size_t>(x) +
               static_cast<size_t>(dims[0]) * (static_cast<size_t>(y) +
               static_cast<size_t>(dims[1]) * static_cast<size_t>(z));
    }
    float at(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return values[index(x, y, z)];
    }
    Aabb box() const {
        Aabb b;
        b.expand(origin);
        b.expand(origin + spacing * Eigen::Vector3d(dims[0] - 1, dims[1] - 1, dims[2] - 1));
        return b;
    }
};

struct BakeStats {
    double parity_disagreement_rate = 0.0; // fraction of lattice points where the 3 rays disagreed
    bool watertight_warning = false;       // disagreement rate > 1%
};

// Bakes the signed distance field of a mesh on a dense grid.
// `resolution` is the sample count along the longest padded axis (>= 8);
// the grid covers the mesh AABB expanded by padding_fraction * diagonal on
// every side. Unsigned distances are exact (BVH-accelerated closest
// triangle); the sign comes from a majority vote of ray-crossing parity
// along the three axis directions, re-casting rays that graze within 1e-9
// of an edge or vertex with 1e-6-jittered directions.
SdfGrid bake_sdf(const TriangleMesh& mesh, int resolution, double padding_fraction = 0.2,
                 BakeStats* stats = nullptr);

// Trilinear value + analytic gradient. Outside the grid box the value is
// the trilinear value at the clamped boundary point plus the Euclidean
// distance to the box, with the gradient pointing away from the box; the
// value is continuous across the boundary.
FieldSample query(const SdfGrid& grid, const Eigen::Vector3d& p);

inline bool point_inside(const SdfGrid& grid, const Eigen::Vector3d& p) {
    return query(grid, p).value < 0.0;
}

// Adapter so a concrete grid can feed the collision optimizer.
class GridField : public DistanceField {
public:
    explicit GridField(const SdfGrid& grid) : grid_(&grid) {}
    FieldSample sample(const Eigen::Vector3d& p) const override { return query(*grid_, p); }

private:
    const SdfGrid* grid_;
};

// Pointwise minimum over several grids; the collision reference for
// sequentially composed scenes. min_i phi_i(p) <= phi_j(p) for every j.
class UnionField : public DistanceField {
public:
    void add(const SdfGrid& grid) { grids_.push_back(&grid); }
    size_t size() const { return grids_.size(); }
    FieldSample sample(const Eigen::Vector3d& p) const override;

private:
    std::vector<const SdfGrid*> grids_;
};

// Binary container: magic "SDF1", origin (3 x f64), spacing (f64),
// dims (3 x u32), values (f32, x-fastest), little-endian throughout.
void save_sdf(const SdfGrid& grid, const std::string& path);
SdfGrid load_sdf(const std::string& path);

} // namespace meshcompose
