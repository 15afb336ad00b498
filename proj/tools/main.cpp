#include "meshcompose/collision.hpp"
#include "meshcompose/errors.hpp"
#include "meshcompose/metrics.hpp"
#include "meshcompose/registration.hpp"
#include "meshcompose/rng.hpp"
#include "meshcompose/scene.hpp"
#include "meshcompose/sdf.hpp"
#include "meshcompose/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace meshcompose;
using nlohmann::json;

json transform_json(const SimilarityTransform& t) {
    const Eigen::Quaterniond q = t.rotation_quat();
    return json{{"scale", t.scale()},
                {"rotation_quat", {q.w(), q.x(), q.y(), q.z()}},
                {"translation", {t.translation().x(), t.translation().y(), t.translation().z()}}};
}

int cmd_register(const std::string& src, const std::string& guidance, size_t sample_n,
                 std::uint64_t seed, const std::string& registrar, const std::string& out_path) {
    AlignmentParams params;
    params.sample_n = sample_n;
    params.registrar = registrar;
    const AlignmentResult result =
        global_to_local_align(load_mesh(src), load_mesh(guidance), seed, params);

    json j{{"transform", transform_json(result.icp.transform)},
           {"obb_scale", result.obb_scale},
           {"coarse_inliers", result.coarse.inliers},
           {"coarse_inlier_ratio", result.coarse.inlier_ratio},
           {"icp_rmse", result.icp.final_rmse},
           {"icp_iterations", result.icp.iterations_run},
           {"icp_converged", result.icp.converged},
           {"low_confidence", result.low_confidence}};
    const std::string text = j.dump(2) + "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << text;
    }
    std::cout << text;
    return 0;
}

int cmd_bake(const std::string& mesh_path, const std::string& out_path, int resolution,
             double padding) {
    BakeStats stats;
    const SdfGrid grid = bake_sdf(load_mesh(mesh_path), resolution, padding, &stats);
    save_sdf(grid, out_path);
    std::cout << "wrote " << out_path << " (dims " << grid.dims[0] << "x" << grid.dims[1] << "x"
              << grid.dims[2] << ", spacing " << grid.spacing << ")\n";
    if (stats.watertight_warning) {
        std::cerr << "warning: parity disagreement rate " << stats.parity_disagreement_rate
                  << " suggests a non-watertight mesh\n";
    }
    return 0;
}

int cmd_metrics(const std::string& a_path, const std::string& b_path, std::uint64_t n,
                std::uint64_t seed, int resolution, size_t sample_n) {
    const TriangleMesh a = load_mesh(a_path);
    const TriangleMesh b = load_mesh(b_path);

    const SurfaceIntersection surf = surface_intersection_ratio(a, b);
    const double r_volume = volume_intersection_ratio(a, b, n, seed);
    const SdfGrid grid = bake_sdf(a, resolution, 0.2);
    const double depth =
        max_penetration_depth(grid, sample_surface(b, sample_n, derive_seed(seed, 7)));

    const json j{{"r_surface", surf.ratio},
                 {"r_volume", r_volume},
                 {"n_samples", n},
                 {"seed", seed},
                 {"intersecting_faces_a", surf.involved_a.size()},
                 {"intersecting_faces_b", surf.involved_b.size()},
                 {"max_penetration_depth", depth}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_metrics_scene(const std::string& scene_path, std::uint64_t n, std::uint64_t seed,
                      int resolution, size_t sample_n) {
    const ComposedScene scene = load_composed_scene(scene_path);
    json reports = json::array();
    std::vector<TriangleMesh> posed;
    std::vector<std::string> ids;
    for (const auto& o : scene.objects) {
        if (o.failed) continue;
        posed.push_back(transform_mesh(load_mesh(o.asset_mesh_path), o.transform));
        ids.push_back(o.id);
    }
    for (size_t i = 0; i < posed.size(); ++i) {
        const SdfGrid grid = bake_sdf(posed[i], resolution, 0.2);
        for (size_t j = 0; j < posed.size(); ++j) {
            if (i >= j) continue;
            const SurfaceIntersection surf = surface_intersection_ratio(posed[i], posed[j]);
            const double rv =
                volume_intersection_ratio(posed[i], posed[j], n, derive_seed(seed, i * 131 + j));
            const double depth = max_penetration_depth(
                grid, sample_surface(posed[j], sample_n, derive_seed(seed, 7 + j)));
            reports.push_back(json{{"a", ids[i]},
                                   {"b", ids[j]},
                                   {"r_surface", surf.ratio},
                                   {"r_volume", rv},
                                   {"n_samples", n},
                                   {"seed", seed},
                                   {"max_penetration_depth", depth}});
        }
    }
    std::cout << reports.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compose independently-authored 3D meshes into collision-free scenes"};
    app.require_subcommand(1);

    // register
    std::string reg_src, reg_guidance, reg_out, reg_registrar = "ppf-ransac";
    size_t reg_sample_n = 5000;
    std::uint64_t reg_seed = 1;
    auto* reg = app.add_subcommand("register", "Recover the similarity transform that maps a "
                                               "mesh onto its guidance geometry");
    reg->add_option("src", reg_src, "source mesh (OBJ/PLY)")->required();
    reg->add_option("guidance", reg_guidance, "guidance mesh (OBJ/PLY)")->required();
    reg->add_option("--sample-n", reg_sample_n, "surface samples per mesh");
    reg->add_option("--seed", reg_seed, "random seed");
    reg->add_option("--registrar", reg_registrar, "coarse registrar (ppf-ransac | external:<cmd>)");
    reg->add_option("-o,--out", reg_out, "also write the result JSON here");

    // bake-sdf
    std::string bake_mesh, bake_out;
    int bake_resolution = 128;
    double bake_padding = 0.2;
    auto* bake = app.add_subcommand("bake-sdf", "Bake a signed distance grid from a mesh");
    bake->add_option("mesh", bake_mesh, "input mesh")->required();
    bake->add_option("-o,--out", bake_out, "output grid file")->required();
    bake->add_option("--resolution", bake_resolution, "samples along the longest axis");
    bake->add_option("--padding", bake_padding, "padding as a fraction of the AABB diagonal");

    // compose
    std::string compose_scene_path, compose_out, compose_obj;
    std::optional<std::uint64_t> compose_seed;
    std::optional<int> compose_resolution;
    std::optional<double> compose_epsilon, compose_beta_max, compose_lambda;
    std::optional<int> compose_k_max;
    auto* comp = app.add_subcommand("compose", "Compose a scene spec into placed objects");
    comp->add_option("scene", compose_scene_path, "scene spec JSON")->required();
    comp->add_option("-o,--out", compose_out, "output composed-scene JSON")->required();
    comp->add_option("--export-obj", compose_obj, "also write a merged OBJ");
    comp->add_option("--seed", compose_seed, "override the scene seed");
    comp->add_option("--resolution", compose_resolution, "override the SDF resolution");
    comp->add_option("--epsilon", compose_epsilon, "override the safety margin");
    comp->add_option("--beta-max", compose_beta_max, "override the annealing ceiling");
    comp->add_option("--k-max", compose_k_max, "override the annealing stage count");
    comp->add_option("--lambda", compose_lambda, "override the soft-repulsion weight");

    // metrics
    std::string metrics_a, metrics_b, metrics_scene;
    std::uint64_t metrics_n = 1000000;
    std::uint64_t metrics_seed = 1;
    int metrics_resolution = 96;
    size_t metrics_sample_n = 10000;
    auto* met = app.add_subcommand("metrics", "Intersection metrics between two meshes");
    met->add_option("a", metrics_a, "first mesh");
    met->add_option("b", metrics_b, "second mesh");
    met->add_option("--n", metrics_n, "Monte Carlo sample count");
    met->add_option("--seed", metrics_seed, "random seed");
    met->add_option("--resolution", metrics_resolution, "SDF resolution for penetration depth");
    met->add_option("--sample-n", metrics_sample_n, "surface samples for penetration depth");
    met->add_option("--against-scene", metrics_scene,
                    "composed-scene JSON: report all object pairs instead of a/b");

    // gen-synthetic
    std::string gen_kind = "clean", gen_out;
    std::uint64_t gen_seed = 1;
    int gen_objects = 2;
    auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic benchmark scene");
    gen->add_option("--kind", gen_kind, "clean | holes | occluded | colliding")->required();
    gen->add_option("--seed", gen_seed, "random seed");
    gen->add_option("-o,--out", gen_out, "output directory")->required();
    gen->add_option("--objects", gen_objects, "number of objects (non-colliding kinds)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (reg->parsed()) {
            return cmd_register(reg_src, reg_guidance, reg_sample_n, reg_seed, reg_registrar,
                                reg_out);
        }
        if (bake->parsed()) {
            return cmd_bake(bake_mesh, bake_out, bake_resolution, bake_padding);
        }
        if (comp->parsed()) {
            SceneSpec spec = load_scene_spec(compose_scene_path);
            if (compose_seed) spec.params.seed = *compose_seed;
            if (compose_resolution) spec.params.sdf_resolution = *compose_resolution;
            if (compose_epsilon) spec.params.collision.epsilon = *compose_epsilon;
            if (compose_beta_max) spec.params.collision.beta_max = *compose_beta_max;
            if (compose_k_max) spec.params.collision.k_max = *compose_k_max;
            if (compose_lambda) spec.params.collision.lambda = *compose_lambda;
            const ComposedScene scene = compose_scene(spec);
            save_composed_scene(scene, compose_out);
            if (!compose_obj.empty()) export_scene_obj(scene, compose_obj);
            for (const auto& w : scene.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << "wrote " << compose_out << "\n";
            return 0;
        }
        if (met->parsed()) {
            if (!metrics_scene.empty()) {
                return cmd_metrics_scene(metrics_scene, metrics_n, metrics_seed,
                                         metrics_resolution, metrics_sample_n);
            }
            if (metrics_a.empty() || metrics_b.empty()) {
                std::cerr << "metrics: need two meshes or --against-scene\n";
                return 2;
            }
            return cmd_metrics(metrics_a, metrics_b, metrics_n, metrics_seed, metrics_resolution,
                               metrics_sample_n);
        }
        if (gen->parsed()) {
            const SyntheticCase result = generate_synthetic_case(
                synthetic_kind_from_string(gen_kind), gen_seed, gen_out, gen_objects);
            std::cout << "wrote " << result.directory << "/scene.json ("
                      << result.spec.objects.size() << " objects)\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
