#include "meshcompose/bvh.hpp"

#include "meshcompose/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace meshcompose {

namespace {
constexpr int kLeafSize = 4;

Aabb triangle_box(const TriangleMesh& mesh, int tri) {
    Aabb box;
    box.expand(mesh.face_vertex(tri, 0));
    box.expand(mesh.face_vertex(tri, 1));
    box.expand(mesh.face_vertex(tri, 2));
    return box;
}

// Slab test against an infinite ray; closed so touching boxes still pass.
bool ray_hits_box(const Eigen::Vector3d& origin, const Eigen::Vector3d& inv_dir,
                  const Aabb& box) {
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        double lo = (box.min[a] - origin[a]) * inv_dir[a];
        double hi = (box.max[a] - origin[a]) * inv_dir[a];
        if (inv_dir[a] < 0.0) std::swap(lo, hi);
        t0 = std::max(t0, lo);
        t1 = std::min(t1, hi);
        if (t0 > t1) return false;
    }
    return true;
}

} // namespace

TriangleBvh::TriangleBvh(const TriangleMesh& mesh) : mesh_(&mesh) {
    if (mesh.faces.empty()) throw DegenerateMeshError("cannot build a BVH over zero faces");
    tri_order_.resize(mesh.faces.size());
    std::iota(tri_order_.begin(), tri_order_.end(), 0);

    std::vector<Eigen::Vector3d> centroids(mesh.faces.size());
    for (size_t i = 0; i < mesh.faces.size(); ++i) {
        centroids[i] = (mesh.face_vertex(static_cast<int>(i), 0) +
                        mesh.face_vertex(static_cast<int>(i), 1) +
                        mesh.face_vertex(static_cast<int>(i), 2)) /
                       3.0;
    }
    nodes_.reserve(2 * mesh.faces.size());
    build(0, static_cast<int>(tri_order_.size()), centroids);
}

int TriangleBvh::build(int first, int count, std::vector<Eigen::Vector3d>& centroids) {
    const int node_index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    Aabb box;
    for (int i = first; i < first + count; ++i) {
        box.expand(triangle_box(*mesh_, tri_order_[i]));
    }
    nodes_[node_index].box = box;

    if (count <= kLeafSize) {
        nodes_[node_index].first = first;
        nodes_[node_index].count = count;
        return node_index;
    }

    // Median split along the widest centroid axis; ties broken by triangle
    // index so the build is deterministic.
    Aabb cbox;
    for (int i = first; i < first + count; ++i) cbox.expand(centroids[tri_order_[i]]);
    int axis = 0;
    const Eigen::Vector3d ext = cbox.extent();
    if (ext[1] > ext[axis]) axis = 1;
    if (ext[2] > ext[axis]) axis = 2;

    const int mid = first + count / 2;
    std::nth_element(tri_order_.begin() + first, tri_order_.begin() + mid,
                     tri_order_.begin() + first + count, [&](int a, int b) {
                         const double ca = centroids[a][axis];
                         const double cb = centroids[b][axis];
                         return ca < cb || (ca == cb && a < b);
                     });

    const int left = build(first, mid - first, centroids);
    const int right = build(mid, first + count - mid, centroids);
    nodes_[node_index].left = left;
    nodes_[node_index].right = right;
    return node_index;
}

double TriangleBvh::distance(const Eigen::Vector3d& p) const {
    return distance(p, nullptr);
}

double TriangleBvh::distance(const Eigen::Vector3d& p, Eigen::Vector3d* closest) const {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Vector3d best_point = Eigen::Vector3d::Zero();

    // Depth-first with branch ordering by box distance.
    std::array<int, 128> stack;
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (node.box.squared_distance(p) >= best) continue;
        if (node.left < 0) {
            for (int i = node.first; i < node.first + node.count; ++i) {
                const int tri = tri_order_[i];
                const Eigen::Vector3d q = closest_point_on_triangle(
                    p, mesh_->face_vertex(tri, 0), mesh_->face_vertex(tri, 1),
                    mesh_->face_vertex(tri, 2));
                const double d2 = (q - p).squaredNorm();
                if (d2 < best) {
                    best = d2;
                    best_point = q;
                }
            }
            continue;
        }
        const double dl = nodes_[node.left].box.squared_distance(p);
        const double dr = nodes_[node.right].box.squared_distance(p);
        // Push the farther child first so the nearer one is explored next.
        if (dl <= dr) {
            if (dr < best) stack[top++] = node.right;
            if (dl < best) stack[top++] = node.left;
        } else {
            if (dl < best) stack[top++] = node.left;
            if (dr < best) stack[top++] = node.right;
        }
    }
    if (closest) *closest = best_point;
    return std::sqrt(best);
}

void TriangleBvh::collect_overlaps(const Aabb& box, std::vector<int>& out) const {
    std::array<int, 128> stack;
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (!node.box.overlaps(box)) continue;
        if (node.left < 0) {
            for (int i = node.first; i < node.first + node.count; ++i) {
                out.push_back(tri_order_[i]);
            }
        } else {
            stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
}

bool TriangleBvh::count_crossings(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                  int& crossings) const {
    const Eigen::Vector3d inv_dir = dir.cwiseInverse();
    crossings = 0;
    bool clean = true;

    std::array<int, 128> stack;
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (!ray_hits_box(origin, inv_dir, node.box)) continue;
        if (node.left < 0) {
            for (int i = node.first; i < node.first + node.count; ++i) {
                const int tri = tri_order_[i];
                const int hit = ray_triangle_parity_hit(origin, dir, mesh_->face_vertex(tri, 0),
                                                        mesh_->face_vertex(tri, 1),
                                                        mesh_->face_vertex(tri, 2));
                if (hit > 0) ++crossings;
                else if (hit < 0) clean = false;
            }
        } else {
            stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
    return clean;
}

bool TriangleBvh::contains(const Eigen::Vector3d& p, bool* disagreement) const {
    // Majority over the three axis rays; a degenerate ray is re-cast with
    // progressively jittered directions (fixed sequence, deterministic).
    int votes = 0;
    std::array<bool, 3> inside{};
    for (int axis = 0; axis < 3; ++axis) {
        Eigen::Vector3d dir = Eigen::Vector3d::Zero();
        dir[axis] = 1.0;
        int crossings = 0;
        bool clean = count_crossings(p, dir, crossings);
        for (int attempt = 1; attempt <= 8 && !clean; ++attempt) {
            Eigen::Vector3d jitter(1e-6 * attempt, 2e-6 * attempt, 3e-6 * attempt);
            jitter[axis] = 1.0;
            clean = count_crossings(p, jitter.normalized(), crossings);
        }
        inside[axis] = (crossings % 2) == 1;
        if (inside[axis]) ++votes;
    }
    if (disagreement) {
        *disagreement = !(inside[0] == inside[1] && inside[1] == inside[2]);
    }
    return votes >= 2;
}

} // namespace meshcompose
