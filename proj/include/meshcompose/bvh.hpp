#pragma once

#include "meshcompose/geometry.hpp"
#include "meshcompose/mesh.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <utility>
#include <vector>

namespace meshcompose {

// Binary AABB tree over mesh triangles. Built deterministically
// (median split on the widest centroid axis, ties by triangle index), so
// every traversal order and result is reproducible.
class TriangleBvh {
public:
    explicit TriangleBvh(const TriangleMesh& mesh);

    const TriangleMesh& mesh() const { return *mesh_; }
    const Aabb& root_box() const { return nodes_[0].box; }

    // Exact distance from p to the closest triangle.
    double distance(const Eigen::Vector3d& p) const;
    // Same, plus the closest surface point.
    double distance(const Eigen::Vector3d& p, Eigen::Vector3d* closest) const;

    // Triangle indices whose AABB overlaps `box` (closed-set test).
    void collect_overlaps(const Aabb& box, std::vector<int>& out) const;

    // Counts ray crossings along `dir` from `origin` for parity testing.
    // Returns false if any hit was degenerate (caller should re-cast with a
    // jittered direction); `crossings` is still the count of clean hits.
    bool count_crossings(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                         int& crossings) const;

    // Parity-vote containment: casts rays along +x, +y, +z (majority of the
    // three decides), re-casting each degenerate ray with deterministically
    // jittered directions. `disagreement` is set when the three rays do not
    // agree (a watertightness signal).
    bool contains(const Eigen::Vector3d& p, bool* disagreement = nullptr) const;

private:
    struct Node {
        Aabb box;
        int left = -1;   // internal: child index; leaf: -1
        int right = -1;
        int first = 0;   // leaf: range into tri_order_
        int count = 0;
    };

    int build(int first, int count, std::vector<Eigen::Vector3d>& centroids);

    const TriangleMesh* mesh_;
    std::vector<Node> nodes_;
    std::vector<int> tri_order_;
};

} // namespace meshcompose
