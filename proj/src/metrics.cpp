#include "meshcompose/metrics.hpp"

#include "meshcompose/bvh.hpp"
#include "meshcompose/errors.hpp"
#include "meshcompose/geometry.hpp"
#include "meshcompose/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace meshcompose {

SurfaceIntersection surface_intersection_ratio(const TriangleMesh& a, const TriangleMesh& b) {
    if (a.faces.empty() || !(a.total_area > 0.0) || b.faces.empty() || !(b.total_area > 0.0)) {
        throw DegenerateMeshError("surface metric over a mesh with zero area");
    }

    const TriangleBvh bvh_b(b);
    std::vector<char> hit_a(a.faces.size(), 0);
    std::vector<char> hit_b(b.faces.size(), 0);

    std::vector<int> candidates;
    for (size_t i = 0; i < a.faces.size(); ++i) {
        Aabb box;
        box.expand(a.face_vertex(static_cast<int>(i), 0));
        box.expand(a.face_vertex(static_cast<int>(i), 1));
        box.expand(a.face_vertex(static_cast<int>(i), 2));
        candidates.clear();
        bvh_b.collect_overlaps(box, candidates);
        if (a.face_areas[i] <= 1e-14) continue; // slivers carry no area
        for (int j : candidates) {
            if (hit_a[i] && hit_b[static_cast<size_t>(j)]) continue;
            if (b.face_areas[static_cast<size_t>(j)] <= 1e-14) continue;
            if (triangle_triangle_intersect(
                    a.face_vertex(static_cast<int>(i), 0), a.face_vertex(static_cast<int>(i), 1),
                    a.face_vertex(static_cast<int>(i), 2), b.face_vertex(j, 0),
                    b.face_vertex(j, 1), b.face_vertex(j, 2))) {
                hit_a[i] = 1;
                hit_b[static_cast<size_t>(j)] = 1;
            }
        }
    }

    SurfaceIntersection out;
    double area_a = 0.0;
    for (size_t i = 0; i < a.faces.size(); ++i) {
        if (hit_a[i]) {
            out.involved_a.push_back(static_cast<int>(i));
            area_a += a.face_areas[i];
        }
    }
    double area_b = 0.0;
    for (size_t j = 0; j < b.faces.size(); ++j) {
        if (hit_b[j]) {
            out.involved_b.push_back(static_cast<int>(j));
            area_b += b.face_areas[j];
        }
    }
    out.ratio = (area_a + area_b) / (a.total_area + b.total_area);
    return out;
}

double volume_intersection_ratio(const TriangleMesh& a, const TriangleMesh& b, std::uint64_t n,
                                 std::uint64_t seed) {
    if (n < 1) throw OutOfRangeError("volume metric needs n >= 1");
    if (a.faces.empty() || b.faces.empty()) {
        throw DegenerateMeshError("volume metric over an empty mesh");
    }

    Aabb box;
    {
        const auto [la, ha] = a.bounding_box();
        const auto [lb, hb] = b.bounding_box();
        box.expand(la);
        box.expand(ha);
        box.expand(lb);
        box.expand(hb);
    }

    const TriangleBvh bvh_a(a);
    const TriangleBvh bvh_b(b);
    const std::uint64_t draw_seed = derive_seed(seed, 0x766F6C756D650001ull);

    // Counter-indexed draws + integer chunk counts: the result is identical
    // for any thread count.
    std::atomic<std::uint64_t> both_total{0};
    std::atomic<std::uint64_t> either_total{0};
    auto run_range = [&](std::uint64_t i0, std::uint64_t i1) {
        std::uint64_t both = 0;
        std::uint64_t either = 0;
        for (std::uint64_t i = i0; i < i1; ++i) {
            const Eigen::Vector3d p = rand_in_box(draw_seed, i, box.min, box.max);
            const bool in_a = bvh_a.contains(p);
            const bool in_b = bvh_b.contains(p);
            if (in_a && in_b) ++both;
            if (in_a || in_b) ++either;
        }
        both_total += both;
        either_total += either;
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (hw <= 1 || n < 4096) {
        run_range(0, n);
    } else {
        std::vector<std::thread> workers;
        const std::uint64_t chunk = (n + hw - 1) / hw;
        for (unsigned t = 0; t < hw; ++t) {
            const std::uint64_t i0 = t * chunk;
            const std::uint64_t i1 = std::min<std::uint64_t>(n, i0 + chunk);
            if (i0 < i1) workers.emplace_back(run_range, i0, i1);
        }
        for (auto& w : workers) w.join();
    }

    if (either_total.load() == 0) {
        throw NoInteriorSamplesError("no Monte Carlo sample landed inside either mesh");
    }
    return static_cast<double>(both_total.load()) / static_cast<double>(either_total.load());
}

double max_penetration_depth(const SdfGrid& grid, const PointCloud& points_of_b) {
    const GridField field(grid);
    return max_penetration_depth(field, points_of_b);
}

double max_penetration_depth(const DistanceField& field, const PointCloud& points_of_b) {
    double depth = 0.0;
    for (const auto& p : points_of_b.points) {
        depth = std::max(depth, -field.sample(p).value);
    }
    return std::max(depth, 0.0);
}

} // namespace meshcompose
