#include "meshcompose/primitives.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>

namespace meshcompose {

TriangleMesh make_box(const Eigen::Vector3d& extents, const Eigen::Vector3d& center,
                      int subdivisions) {
    const int n = std::max(1, subdivisions);
    const Eigen::Vector3d h = 0.5 * extents;
    TriangleMesh mesh;
    // Each face is an n x n grid; vertices are per-face (seams duplicated).
    auto add_face = [&](const Eigen::Vector3d& origin, const Eigen::Vector3d& du,
                        const Eigen::Vector3d& dv) {
        const int base = static_cast<int>(mesh.vertices.size());
        for (int v = 0; v <= n; ++v) {
            for (int u = 0; u <= n; ++u) {
                mesh.vertices.push_back(center + origin + (static_cast<double>(u) / n) * du +
                                        (static_cast<double>(v) / n) * dv);
            }
        }
        for (int v = 0; v < n; ++v) {
            for (int u = 0; u < n; ++u) {
                const int a = base + v * (n + 1) + u;
                const int b = a + 1;
                const int c = a + (n + 1);
                const int d = c + 1;
                mesh.faces.push_back({a, b, d});
                mesh.faces.push_back({a, d, c});
            }
        }
    };
    const Eigen::Vector3d ex(extents.x(), 0, 0);
    const Eigen::Vector3d ey(0, extents.y(), 0);
    const Eigen::Vector3d ez(0, 0, extents.z());
    add_face(Eigen::Vector3d(-h.x(), -h.y(), +h.z()), ex, ey);  // +z
    add_face(Eigen::Vector3d(-h.x(), +h.y(), -h.z()), ex, -ey); // -z
    add_face(Eigen::Vector3d(-h.x(), -h.y(), -h.z()), ex, ez);  // -y
    add_face(Eigen::Vector3d(+h.x(), +h.y(), -h.z()), -ex, ez); // +y
    add_face(Eigen::Vector3d(-h.x(), +h.y(), -h.z()), -ey, ez); // -x
    add_face(Eigen::Vector3d(+h.x(), -h.y(), -h.z()), ey, ez);  // +x
    mesh.finalize();
    return mesh;
}

TriangleMesh make_icosphere(double radius, int level, const Eigen::Vector3d& center) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> verts = {
        {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (auto& v : verts) v.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };

    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            const auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int idx = static_cast<int>(verts.size());
            verts.push_back((verts[a] + verts[b]).normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int ab = mid(f[0], f[1]);
            const int bc = mid(f[1], f[2]);
            const int ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces.swap(next);
    }

    TriangleMesh mesh;
    mesh.vertices.reserve(verts.size());
    for (const auto& v : verts) mesh.vertices.push_back(center + radius * v);
    mesh.faces = std::move(faces);
    mesh.finalize();
    return mesh;
}

TriangleMesh make_cylinder(double radius, double height, int segments,
                           const Eigen::Vector3d& center) {
    TriangleMesh mesh;
    const double hz = 0.5 * height;
    for (int ring = 0; ring < 2; ++ring) {
        const double z = ring == 0 ? -hz : hz;
        for (int i = 0; i < segments; ++i) {
            const double a = 2.0 * M_PI * i / segments;
            mesh.vertices.push_back(center +
                                    Eigen::Vector3d(radius * std::cos(a), radius * std::sin(a), z));
        }
    }
    const int bottom_center = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(center + Eigen::Vector3d(0, 0, -hz));
    const int top_center = bottom_center + 1;
    mesh.vertices.push_back(center + Eigen::Vector3d(0, 0, hz));

    for (int i = 0; i < segments; ++i) {
        const int j = (i + 1) % segments;
        // side quad
        mesh.faces.push_back({i, j, segments + j});
        mesh.faces.push_back({i, segments + j, segments + i});
        // caps
        mesh.faces.push_back({bottom_center, j, i});
        mesh.faces.push_back({top_center, segments + i, segments + j});
    }
    mesh.finalize();
    return mesh;
}

TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts) {
    TriangleMesh out;
    for (const auto& part : parts) {
        const int offset = static_cast<int>(out.vertices.size());
        out.vertices.insert(out.vertices.end(), part.vertices.begin(), part.vertices.end());
        for (const auto& f : part.faces) {
            out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
        }
    }
    out.finalize();
    return out;
}

} // namespace meshcompose
