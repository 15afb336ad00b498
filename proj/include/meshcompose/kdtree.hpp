#pragma once

#include <Eigen/Core>

#include <vector>

namespace meshcompose {

// 3D kd-tree for nearest-neighbor queries. Exact distance ties are broken
// by the lowest point index, which makes every query result unique
// regardless of traversal order.
class KdTree {
public:
    explicit KdTree(const std::vector<Eigen::Vector3d>& points);

    // Index of the nearest point to q (lowest index on ties) and its
    // squared distance. The tree must be non-empty.
    int nearest(const Eigen::Vector3d& q, double* sq_dist = nullptr) const;

    // Indices of all points within radius of q (inclusive), ascending.
    void radius_search(const Eigen::Vector3d& q, double radius, std::vector<int>& out) const;

    // Indices of the k nearest points, closest first (ties by index).
    void knn(const Eigen::Vector3d& q, int k, std::vector<int>& out) const;

    size_t size() const { return points_->size(); }

private:
    struct Node {
        int axis = 0;
        int point = -1; // index into points
        int left = -1;
        int right = -1;
    };

    int build(std::vector<int>& idx, int first, int count);
    void nearest_rec(int node, const Eigen::Vector3d& q, double& best, int& best_idx) const;
    void radius_rec(int node, const Eigen::Vector3d& q, double r2, std::vector<int>& out) const;

    const std::vector<Eigen::Vector3d>* points_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

} // namespace meshcompose
