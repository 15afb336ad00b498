#include "meshcompose/synthetic.hpp"

#include "meshcompose/errors.hpp"
#include "meshcompose/geometry.hpp"
#include "meshcompose/metrics.hpp"
#include "meshcompose/primitives.hpp"
#include "meshcompose/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace meshcompose {

using nlohmann::json;

SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "clean") return SyntheticKind::Clean;
    if (s == "holes") return SyntheticKind::Holes;
    if (s == "occluded") return SyntheticKind::Occluded;
    if (s == "colliding") return SyntheticKind::Colliding;
    throw OutOfRangeError("unknown synthetic kind '" + s + "'");
}

std::string to_string(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::Clean: return "clean";
        case SyntheticKind::Holes: return "holes";
        case SyntheticKind::Occluded: return "occluded";
        case SyntheticKind::Colliding: return "colliding";
    }
    return "clean";
}

namespace {

// Four disjoint primitives in an asymmetric arrangement: distinct box
// ratios and off-axis satellites, so pose recovery stays well-posed even
// when an occlusion crop removes part of the shape.
TriangleMesh make_constellation(Prng& rng) {
    const double gap = 0.08;
    const Eigen::Vector3d box_ext(rng.uniform(1.0, 1.3), rng.uniform(0.6, 0.75),
                                  rng.uniform(0.4, 0.55));
    const double sphere_r = rng.uniform(0.28, 0.4);
    const double cyl_r = rng.uniform(0.16, 0.26);
    const double cyl_h = rng.uniform(0.5, 0.8);
    const double knob_r = rng.uniform(0.15, 0.22);

    const Eigen::Vector3d sphere_c(0.5 * box_ext.x() + sphere_r + gap, rng.uniform(0.2, 0.3),
                                   0.0);
    const Eigen::Vector3d cyl_c(-(0.5 * box_ext.x() + cyl_r + gap), 0.0,
                                rng.uniform(0.25, 0.4));
    const Eigen::Vector3d knob_c(rng.uniform(-0.2, 0.2),
                                 -(0.5 * box_ext.y() + knob_r + gap),
                                 rng.uniform(0.1, 0.2));

    return merge_meshes({make_box(box_ext, Eigen::Vector3d::Zero(), 6),
                         make_icosphere(sphere_r, 2, sphere_c),
                         make_cylinder(cyl_r, cyl_h, 24, cyl_c),
                         make_icosphere(knob_r, 2, knob_c)});
}

SimilarityTransform random_pose(Prng& rng, double diagonal, double max_translation_frac) {
    const double scale = rng.uniform(0.5, 2.0);
    const Eigen::Matrix3d rotation = rng.rotation();
    const Eigen::Vector3d dir = rng.unit_vector();
    const Eigen::Vector3d translation =
        rng.uniform(0.0, max_translation_frac) * diagonal * dir;
    return SimilarityTransform(scale, rotation, translation);
}

TriangleMesh delete_random_faces(const TriangleMesh& mesh, double fraction, Prng& rng) {
    const auto n_faces = mesh.faces.size();
    const auto n_delete = static_cast<size_t>(std::llround(fraction * static_cast<double>(n_faces)));
    std::vector<size_t> order(n_faces);
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: the first n_delete entries are the deletions.
    for (size_t i = 0; i < n_delete; ++i) {
        const size_t j = i + static_cast<size_t>(rng.index(n_faces - i));
        std::swap(order[i], order[j]);
    }
    std::vector<char> keep(n_faces, 1);
    for (size_t i = 0; i < n_delete; ++i) keep[order[i]] = 0;

    TriangleMesh out;
    out.vertices = mesh.vertices;
    for (size_t i = 0; i < n_faces; ++i) {
        if (keep[i]) out.faces.push_back(mesh.faces[i]);
    }
    out.finalize();
    return out;
}

TriangleMesh halfspace_crop(const TriangleMesh& mesh, double keep_fraction, Prng& rng) {
    const Eigen::Vector3d dir = rng.unit_vector();
    const auto n_faces = mesh.faces.size();
    std::vector<size_t> order(n_faces);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> key(n_faces);
    for (size_t i = 0; i < n_faces; ++i) {
        const auto& f = mesh.faces[i];
        key[i] = dir.dot(mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return key[a] < key[b]; });

    const auto n_keep = std::max<size_t>(
        1, static_cast<size_t>(std::llround(keep_fraction * static_cast<double>(n_faces))));
    std::vector<char> keep(n_faces, 0);
    for (size_t i = 0; i < n_keep && i < n_faces; ++i) keep[order[i]] = 1;

    TriangleMesh out;
    out.vertices = mesh.vertices;
    for (size_t i = 0; i < n_faces; ++i) {
        if (keep[i]) out.faces.push_back(mesh.faces[i]);
    }
    out.finalize();
    return out;
}

Aabb mesh_aabb(const TriangleMesh& mesh) {
    Aabb box;
    for (const auto& v : mesh.vertices) box.expand(v);
    return box;
}

bool aabbs_disjoint(const std::vector<Aabb>& boxes, double margin) {
    for (size_t i = 0; i < boxes.size(); ++i) {
        for (size_t j = i + 1; j < boxes.size(); ++j) {
            Aabb grown = boxes[i];
            grown.min -= Eigen::Vector3d::Constant(margin);
            grown.max += Eigen::Vector3d::Constant(margin);
            if (grown.overlaps(boxes[j])) return false;
        }
    }
    return true;
}

// Ground-truth poses for two boxes with a target volumetric overlap of
// ~0.30, solved by bisection on the center distance with the Monte Carlo
// metric as the measurement.
std::vector<SimilarityTransform> colliding_poses(const std::vector<TriangleMesh>& assets,
                                                 double anchor_scale, double remain_scale,
                                                 Prng& rng, std::uint64_t measure_seed) {
    const double diag0 = assets[0].bounding_diagonal();
    const SimilarityTransform anchor_pose(anchor_scale, rng.rotation(),
                                          rng.uniform(0.0, 0.3) * diag0 * rng.unit_vector());
    const TriangleMesh posed_anchor = transform_mesh(assets[0], anchor_pose);
    const Eigen::Vector3d anchor_center = mesh_aabb(posed_anchor).center();

    const Eigen::Matrix3d remain_rot = rng.rotation();
    const Eigen::Vector3d dir = rng.unit_vector();

    const double a_diag = mesh_aabb(posed_anchor).diagonal();
    const double r_diag = remain_scale * assets[1].bounding_diagonal();
    double lo = 0.0;
    double hi = 0.5 * (a_diag + r_diag);

    auto overlap_at = [&](double t) {
        // Remain assets are centered at the origin, so the translation is
        // the desired posed center directly.
        const SimilarityTransform pose(remain_scale, remain_rot, anchor_center + t * dir);
        return volume_intersection_ratio(posed_anchor, transform_mesh(assets[1], pose), 150000,
                                         measure_seed);
    };

    double t = 0.0;
    for (int iter = 0; iter < 22; ++iter) {
        t = 0.5 * (lo + hi);
        const double rv = overlap_at(t);
        if (std::abs(rv - 0.30) < 0.008) break;
        if (rv > 0.30) lo = t;
        else hi = t;
        t = 0.5 * (lo + hi);
    }

    return {anchor_pose, SimilarityTransform(remain_scale, remain_rot, anchor_center + t * dir)};
}

} // namespace

SyntheticCase generate_synthetic_case(SyntheticKind kind, std::uint64_t seed,
                                      const std::string& dir, int n_objects) {
    if (n_objects < 2) throw OutOfRangeError("synthetic cases need at least 2 objects");
    if (kind == SyntheticKind::Colliding && n_objects != 2) {
        throw OutOfRangeError("the colliding kind is a two-object benchmark");
    }
    std::filesystem::create_directories(dir);

    Prng rng(seed, 0x73796E7468000001ull + static_cast<std::uint64_t>(kind));

    // Assets.
    std::vector<TriangleMesh> assets;
    double collide_s0 = 1.0;
    double collide_s1 = 1.0;
    if (kind == SyntheticKind::Colliding) {
        // Near-cubes sized so the posed pair can reach a 30% overlap: the
        // pose scales are drawn first and divided back out of the edges.
        const double posed_anchor_edge = rng.uniform(1.1, 1.4);
        const double posed_remain_edge = posed_anchor_edge * rng.uniform(0.86, 0.97);
        collide_s0 = rng.uniform(0.5, 2.0);
        collide_s1 = rng.uniform(0.5, 2.0);
        auto near_cube = [&](double edge) {
            return make_box(Eigen::Vector3d(edge, edge * rng.uniform(0.96, 1.04),
                                            edge * rng.uniform(0.96, 1.04)));
        };
        assets.push_back(near_cube(posed_anchor_edge / collide_s0));
        assets.push_back(near_cube(posed_remain_edge / collide_s1));
    } else {
        for (int i = 0; i < n_objects; ++i) assets.push_back(make_constellation(rng));
    }

    // Ground-truth poses.
    std::vector<SimilarityTransform> poses;
    if (kind == SyntheticKind::Colliding) {
        poses = colliding_poses(assets, collide_s0, collide_s1, rng,
                                derive_seed(seed, 0x6D656173ull));
    } else {
        // Rejection-sample pose sets until the posed objects are pairwise
        // disjoint with a safety margin.
        for (int attempt = 0; attempt < 500; ++attempt) {
            poses.clear();
            std::vector<Aabb> boxes;
            double margin = 0.0;
            for (const auto& asset : assets) {
                const double diag = asset.bounding_diagonal();
                poses.push_back(random_pose(rng, diag, 1.0));
                boxes.push_back(mesh_aabb(transform_mesh(asset, poses.back())));
                margin = std::max(margin, 0.05 * boxes.back().diagonal());
            }
            if (aabbs_disjoint(boxes, margin)) break;
            poses.clear();
        }
        if (poses.empty()) {
            throw DegenerateConfigurationError("could not place objects disjointly");
        }
    }

    // Guidance meshes: posed assets, degraded per kind.
    std::vector<TriangleMesh> guidance;
    for (size_t i = 0; i < assets.size(); ++i) {
        TriangleMesh g = transform_mesh(assets[i], poses[i]);
        switch (kind) {
            case SyntheticKind::Holes: g = delete_random_faces(g, 0.25, rng); break;
            case SyntheticKind::Occluded: g = halfspace_crop(g, 0.40, rng); break;
            default: break;
        }
        guidance.push_back(std::move(g));
    }

    // Write everything.
    SyntheticCase result;
    result.directory = dir;
    const std::filesystem::path base(dir);
    for (size_t i = 0; i < assets.size(); ++i) {
        const std::string id = "obj" + std::to_string(i);
        const std::string asset_file = "asset_" + id + ".obj";
        const std::string guidance_file = "guidance_" + id + ".obj";
        save_obj(assets[i], (base / asset_file).string());
        save_obj(guidance[i], (base / guidance_file).string());

        SceneObject obj;
        obj.id = id;
        obj.asset_mesh_path = (base / asset_file).string();
        obj.guidance_mesh_path = (base / guidance_file).string();
        obj.anchor_hint = kind == SyntheticKind::Colliding && i == 0;
        result.spec.objects.push_back(std::move(obj));
    }
    result.spec.params.seed = seed;
    result.spec.params.sample_n = 5000;
    result.spec.params.sdf_resolution = 64;
    result.spec.params.metrics_n = 200000;
    result.ground_truth = poses;

    save_scene_spec(result.spec, (base / "scene.json").string());

    json gt = json::array();
    for (size_t i = 0; i < poses.size(); ++i) {
        const Eigen::Quaterniond q = poses[i].rotation_quat();
        gt.push_back(json{{"id", "obj" + std::to_string(i)},
                          {"scale", poses[i].scale()},
                          {"rotation_quat", {q.w(), q.x(), q.y(), q.z()}},
                          {"translation",
                           {poses[i].translation().x(), poses[i].translation().y(),
                            poses[i].translation().z()}}});
    }
    std::ofstream gt_out(base / "ground_truth.json");
    gt_out << json{{"transforms", gt}}.dump(2) << "\n";

    return result;
}

std::vector<SimilarityTransform> load_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw UnsupportedFormatError(std::string("bad ground-truth JSON: ") + e.what());
    }
    std::vector<SimilarityTransform> out;
    for (const auto& jt : j.at("transforms")) {
        const auto& rq = jt.at("rotation_quat");
        Eigen::Quaterniond q(rq.at(0).get<double>(), rq.at(1).get<double>(),
                             rq.at(2).get<double>(), rq.at(3).get<double>());
        q.normalize();
        const auto& tr = jt.at("translation");
        out.emplace_back(jt.at("scale").get<double>(), q.toRotationMatrix(),
                         Eigen::Vector3d(tr.at(0).get<double>(), tr.at(1).get<double>(),
                                         tr.at(2).get<double>()));
    }
    return out;
}

} // namespace meshcompose
