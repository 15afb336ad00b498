#include "meshcompose/kdtree.hpp"

#include "meshcompose/errors.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace meshcompose {

KdTree::KdTree(const std::vector<Eigen::Vector3d>& points) : points_(&points) {
    if (points.empty()) throw InsufficientPointsError("kd-tree over an empty cloud");
    std::vector<int> idx(points.size());
    std::iota(idx.begin(), idx.end(), 0);
    nodes_.reserve(points.size());
    root_ = build(idx, 0, static_cast<int>(idx.size()));
}

int KdTree::build(std::vector<int>& idx, int first, int count) {
    if (count <= 0) return -1;

    // Split axis = widest extent of this subset.
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (int i = first; i < first + count; ++i) {
        lo = lo.cwiseMin((*points_)[idx[i]]);
        hi = hi.cwiseMax((*points_)[idx[i]]);
    }
    int axis = 0;
    const Eigen::Vector3d ext = hi - lo;
    if (ext[1] > ext[axis]) axis = 1;
    if (ext[2] > ext[axis]) axis = 2;

    const int mid = first + count / 2;
    std::nth_element(idx.begin() + first, idx.begin() + mid, idx.begin() + first + count,
                     [&](int a, int b) {
                         const double ca = (*points_)[a][axis];
                         const double cb = (*points_)[b][axis];
                         return ca < cb || (ca == cb && a < b);
                     });

    const int node_index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[node_index].axis = axis;
    nodes_[node_index].point = idx[mid];

    const int left = build(idx, first, mid - first);
    const int right = build(idx, mid + 1, first + count - (mid + 1));
    nodes_[node_index].left = left;
    nodes_[node_index].right = right;
    return node_index;
}

void KdTree::nearest_rec(int node, const Eigen::Vector3d& q, double& best, int& best_idx) const {
    if (node < 0) return;
    const Node& n = nodes_[node];
    const Eigen::Vector3d& p = (*points_)[n.point];

    const double d2 = (p - q).squaredNorm();
    if (d2 < best || (d2 == best && n.point < best_idx)) {
        best = d2;
        best_idx = n.point;
    }

    const double delta = q[n.axis] - p[n.axis];
    const int near = delta < 0.0 ? n.left : n.right;
    const int far = delta < 0.0 ? n.right : n.left;
    nearest_rec(near, q, best, best_idx);
    // The far side can still hold an equal-distance, lower-index point.
    if (delta * delta <= best) nearest_rec(far, q, best, best_idx);
}

int KdTree::nearest(const Eigen::Vector3d& q, double* sq_dist) const {
    double best = std::numeric_limits<double>::infinity();
    int best_idx = std::numeric_limits<int>::max();
    nearest_rec(root_, q, best, best_idx);
    if (sq_dist) *sq_dist = best;
    return best_idx;
}

void KdTree::radius_rec(int node, const Eigen::Vector3d& q, double r2,
                        std::vector<int>& out) const {
    if (node < 0) return;
    const Node& n = nodes_[node];
    const Eigen::Vector3d& p = (*points_)[n.point];
    if ((p - q).squaredNorm() <= r2) out.push_back(n.point);
    const double delta = q[n.axis] - p[n.axis];
    const int near = delta < 0.0 ? n.left : n.right;
    const int far = delta < 0.0 ? n.right : n.left;
    radius_rec(near, q, r2, out);
    if (delta * delta <= r2) radius_rec(far, q, r2, out);
}

void KdTree::radius_search(const Eigen::Vector3d& q, double radius, std::vector<int>& out) const {
    out.clear();
    radius_rec(root_, q, radius * radius, out);
    std::sort(out.begin(), out.end());
}

void KdTree::knn(const Eigen::Vector3d& q, int k, std::vector<int>& out) const {
    // (distance, index) max-heap of size k.
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry> heap;

    // Iterative traversal with a small explicit stack.
    std::vector<int> stack;
    stack.push_back(root_);
    while (!stack.empty()) {
        const int node = stack.back();
        stack.pop_back();
        if (node < 0) continue;
        const Node& n = nodes_[node];
        const Eigen::Vector3d& p = (*points_)[n.point];
        const double d2 = (p - q).squaredNorm();
        const Entry e{d2, n.point};
        if (static_cast<int>(heap.size()) < k) {
            heap.push(e);
        } else if (e < heap.top()) {
            heap.pop();
            heap.push(e);
        }
        const double delta = q[n.axis] - p[n.axis];
        const int near = delta < 0.0 ? n.left : n.right;
        const int far = delta < 0.0 ? n.right : n.left;
        const double worst =
            static_cast<int>(heap.size()) < k ? std::numeric_limits<double>::infinity()
                                              : heap.top().first;
        if (delta * delta <= worst) stack.push_back(far);
        stack.push_back(near);
    }

    out.resize(heap.size());
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
        *it = heap.top().second;
        heap.pop();
    }
}

} // namespace meshcompose
