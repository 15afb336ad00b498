#include "meshcompose/errors.hpp"
#include "meshcompose/obb.hpp"
#include "meshcompose/rng.hpp"
#include "meshcompose/scene.hpp"

#include "subprocess.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <unistd.h>

namespace meshcompose {

using nlohmann::json;

std::uint64_t scene_object_seed(const SceneSpec& spec, size_t index) {
    return derive_seed(spec.params.seed, 100 + index);
}

namespace {

std::uint64_t object_seed(const SceneSpec& spec, size_t index) {
    return scene_object_seed(spec, index);
}

std::uint64_t pair_seed(const SceneSpec& spec, size_t i, size_t j) {
    return derive_seed(spec.params.seed, 10000 + i * spec.objects.size() + j);
}

AlignmentParams alignment_params(const SceneSpec& spec) {
    AlignmentParams p;
    p.sample_n = spec.params.sample_n;
    p.icp = spec.params.icp;
    p.registrar = spec.params.registrar;
    return p;
}

template <typename Fn>
auto with_object_context(const std::string& id, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (Error& e) {
        e.with_context("object '" + id + "'");
        throw;
    }
}

size_t anchor_index_of(const SceneSpec& spec, const std::string& anchor_id) {
    for (size_t i = 0; i < spec.objects.size(); ++i) {
        if (spec.objects[i].id == anchor_id) return i;
    }
    throw InvalidSceneSpecError("anchor id '" + anchor_id + "' not in scene");
}

// Mutable composition state shared by the composer and the refinement loop.
struct SceneState {
    std::vector<TriangleMesh> assets;           // current (possibly replaced) asset meshes
    std::vector<TriangleMesh> guidance;
    std::vector<TriangleMesh> posed;            // assets under their final transforms
    std::vector<std::unique_ptr<SdfGrid>> grids; // baked at the posed position (null until placed)
    std::vector<PointCloud> posed_clouds;       // sampled asset clouds under final transforms
};

void bake_object_grid(SceneState& state, const SceneSpec& spec, size_t index,
                      std::vector<std::string>& warnings) {
    BakeStats stats;
    state.grids[index] = std::make_unique<SdfGrid>(bake_sdf(
        state.posed[index], spec.params.sdf_resolution, spec.params.sdf_padding, &stats));
    if (stats.watertight_warning) {
        std::ostringstream msg;
        msg << "object '" << spec.objects[index].id
            << "': SDF parity disagreement rate " << stats.parity_disagreement_rate
            << " suggests a non-watertight surface";
        warnings.push_back(msg.str());
    }
}

void refresh_posed(SceneState& state, const ComposedScene& scene, const SceneSpec& spec,
                   size_t index) {
    const ObjectResult* result = scene.find(spec.objects[index].id);
    state.posed[index] = transform_mesh(state.assets[index], result->transform);
    state.posed_clouds[index] = transform_cloud(
        sample_surface(state.assets[index], spec.params.sample_n,
                       derive_seed(object_seed(spec, index), 11)),
        result->transform);
}

// Stage 2 for one object: coarse initialization against its guidance, then
// collision-aware placement against the union of already-placed fields.
void place_object(SceneState& state, ComposedScene& scene, const SceneSpec& spec, size_t index,
                  const UnionField& field) {
    const std::string& id = spec.objects[index].id;
    ObjectResult& result = *const_cast<ObjectResult*>(scene.find(id));

    const CoarseStage stage = with_object_context(id, [&] {
        return run_coarse_stage(state.assets[index], state.guidance[index],
                                object_seed(spec, index), alignment_params(spec));
    });
    result.obb_scale = stage.obb_scale;
    result.coarse_inliers = stage.coarse.inliers;
    result.coarse_inlier_ratio = stage.coarse.inlier_ratio;
    if (stage.coarse.inlier_ratio < 0.2) {
        scene.warnings.push_back("object '" + id + "': low-confidence coarse registration (" +
                                 std::to_string(stage.coarse.inlier_ratio) + " inlier ratio)");
    }

    CollisionParams collision = spec.params.collision;
    collision.epsilon = scene.epsilon_used;
    const IcpParams icp = effective_icp_params(spec.params.icp, stage.guidance);
    OptimizationTrace trace = with_object_context(id, [&] {
        return optimize_placement(stage.source, stage.guidance, field, stage.coarse.transform,
                                  collision, icp);
    });

    result.transform = trace.final_transform;
    result.optimization = std::move(trace);
    result.failed = false;
    result.failure.clear();

    state.posed[index] = transform_mesh(state.assets[index], result.transform);
    state.posed_clouds[index] = transform_cloud(stage.source, result.transform);
}

void compute_pair_report(ComposedScene& scene, const SceneSpec& spec, const SceneState& state,
                         size_t i, size_t j) {
    PairReport pr;
    pr.a = spec.objects[i].id;
    pr.b = spec.objects[j].id;
    pr.report.n_samples = spec.params.metrics_n;
    pr.report.seed = pair_seed(spec, i, j);

    const SurfaceIntersection surf = surface_intersection_ratio(state.posed[i], state.posed[j]);
    pr.report.r_surface = surf.ratio;
    pr.report.intersecting_face_counts = {static_cast<int>(surf.involved_a.size()),
                                          static_cast<int>(surf.involved_b.size())};
    try {
        pr.report.r_volume = volume_intersection_ratio(state.posed[i], state.posed[j],
                                                       pr.report.n_samples, pr.report.seed);
    } catch (const NoInteriorSamplesError&) {
        pr.report.r_volume = 0.0;
        scene.warnings.push_back("pair (" + pr.a + ", " + pr.b +
                                 "): no interior Monte Carlo samples");
    }
    pr.report.max_penetration_depth =
        std::max(max_penetration_depth(*state.grids[i], state.posed_clouds[j]),
                 max_penetration_depth(*state.grids[j], state.posed_clouds[i]));

    // Replace an existing report for this pair, else append.
    for (auto& existing : scene.pairwise) {
        if ((existing.a == pr.a && existing.b == pr.b) ||
            (existing.a == pr.b && existing.b == pr.a)) {
            existing = pr;
            return;
        }
    }
    scene.pairwise.push_back(std::move(pr));
}

SceneState load_scene_state(const SceneSpec& spec) {
    SceneState state;
    state.assets.resize(spec.objects.size());
    state.guidance.resize(spec.objects.size());
    state.posed.resize(spec.objects.size());
    state.grids.resize(spec.objects.size());
    state.posed_clouds.resize(spec.objects.size());
    for (size_t i = 0; i < spec.objects.size(); ++i) {
        with_object_context(spec.objects[i].id, [&] {
            state.assets[i] = load_mesh(spec.objects[i].asset_mesh_path);
            state.guidance[i] = load_mesh(spec.objects[i].guidance_mesh_path);
            return 0;
        });
    }
    return state;
}

ComposedScene compose_impl(const SceneSpec& spec) {
    spec.validate();
    SceneState state = load_scene_state(spec);
    const std::string anchor_id = select_anchor(spec);
    const size_t anchor = anchor_index_of(spec, anchor_id);

    ComposedScene scene;
    scene.anchor_id = anchor_id;
    for (const auto& obj : spec.objects) {
        ObjectResult r;
        r.id = obj.id;
        r.asset_mesh_path = obj.asset_mesh_path;
        r.is_anchor = obj.id == anchor_id;
        scene.objects.push_back(std::move(r));
    }

    // Stage 1: anchor alignment. A failure here is fatal in either mode.
    {
        ObjectResult& result = scene.objects[anchor];
        const AlignmentResult aligned = with_object_context(anchor_id, [&] {
            return global_to_local_align(state.assets[anchor], state.guidance[anchor],
                                         object_seed(spec, anchor), alignment_params(spec));
        });
        result.transform = aligned.icp.transform;
        result.obb_scale = aligned.obb_scale;
        result.coarse_inliers = aligned.coarse.inliers;
        result.coarse_inlier_ratio = aligned.coarse.inlier_ratio;
        result.icp_rmse = aligned.icp.final_rmse;
        result.icp_iterations = aligned.icp.iterations_run;
        result.icp_converged = aligned.icp.converged;
        if (aligned.low_confidence) {
            scene.warnings.push_back("object '" + anchor_id +
                                     "': low-confidence coarse registration (" +
                                     std::to_string(aligned.coarse.inlier_ratio) +
                                     " inlier ratio)");
        }
        refresh_posed(state, scene, spec, anchor);
    }

    // The safety margin adapts to the anchored scene unless pinned.
    scene.epsilon_used =
        spec.params.collision.epsilon > 0.0
            ? spec.params.collision.epsilon
            : 0.005 * state.posed[anchor].bounding_diagonal();

    bake_object_grid(state, spec, anchor, scene.warnings);

    // Stage 2: remaining objects in list order; the collision reference is
    // the union of everything already placed.
    UnionField field;
    field.add(*state.grids[anchor]);
    for (size_t i = 0; i < spec.objects.size(); ++i) {
        if (i == anchor) continue;
        try {
            place_object(state, scene, spec, i, field);
            bake_object_grid(state, spec, i, scene.warnings);
            field.add(*state.grids[i]);
        } catch (Error& e) {
            if (spec.params.strict) throw;
            ObjectResult& result = *const_cast<ObjectResult*>(scene.find(spec.objects[i].id));
            result.failed = true;
            result.failure = e.what();
            scene.warnings.push_back("object '" + spec.objects[i].id + "' failed: " + e.what());
        }
    }

    // Metrics for all successfully placed pairs.
    for (size_t i = 0; i < spec.objects.size(); ++i) {
        if (scene.objects[i].failed || !state.grids[i]) continue;
        for (size_t j = i + 1; j < spec.objects.size(); ++j) {
            if (scene.objects[j].failed || !state.grids[j]) continue;
            compute_pair_report(scene, spec, state, i, j);
        }
    }
    return scene;
}

double worst_pair_depth(const ComposedScene& scene) {
    double depth = 0.0;
    for (const auto& pr : scene.pairwise) {
        depth = std::max(depth, pr.report.max_penetration_depth);
    }
    return depth;
}

// The non-anchor object that penetrates deepest; lowest spec index on ties.
std::string worst_offender(const ComposedScene& scene) {
    std::string offender;
    double depth = -1.0;
    for (const auto& pr : scene.pairwise) {
        for (const std::string& id : {pr.a, pr.b}) {
            if (id == scene.anchor_id) continue;
            if (pr.report.max_penetration_depth > depth) {
                depth = pr.report.max_penetration_depth;
                offender = id;
            }
        }
    }
    return offender;
}

} // namespace

std::string select_anchor(const SceneSpec& spec) {
    spec.validate();
    for (const auto& obj : spec.objects) {
        if (obj.anchor_hint) return obj.id;
    }
    // Largest guidance footprint on the x-y plane of the guidance frame;
    // ties by AABB volume, then list order.
    size_t best = 0;
    double best_area = -1.0;
    double best_volume = -1.0;
    for (size_t i = 0; i < spec.objects.size(); ++i) {
        const TriangleMesh guidance = load_mesh(spec.objects[i].guidance_mesh_path);
        const auto [lo, hi] = guidance.bounding_box();
        const Eigen::Vector3d ext = hi - lo;
        const double area = ext.x() * ext.y();
        const double volume = ext.x() * ext.y() * ext.z();
        if (area > best_area || (area == best_area && volume > best_volume)) {
            best = i;
            best_area = area;
            best_volume = volume;
        }
    }
    return spec.objects[best].id;
}

ComposedScene compose_pair(const SceneSpec& spec) {
    if (spec.objects.size() != 2) {
        throw InvalidSceneSpecError("compose_pair expects exactly 2 objects");
    }
    return compose_impl(spec);
}

ComposedScene compose_sequential(const SceneSpec& spec) { return compose_impl(spec); }

ComposedScene compose_scene(const SceneSpec& spec) {
    ComposedScene scene =
        spec.objects.size() == 2 ? compose_pair(spec) : compose_sequential(spec);
    if (spec.refinement.enabled) {
        scene = refinement_loop(scene, spec, make_editor(spec.refinement.editor));
    }
    return scene;
}

Editor make_mock_editor() {
    return [](const EditorRequest&) { return EditorResponse{}; };
}

Editor make_subprocess_editor(const std::string& command) {
    return [command](const EditorRequest& request) {
        // The scene snapshot travels by reference: a temp file path.
        static int counter = 0;
        const auto snapshot =
            std::filesystem::temp_directory_path() /
            ("meshcompose-scene-" + std::to_string(getpid()) + "-" + std::to_string(counter++) +
             ".json");
        {
            std::ofstream out(snapshot);
            out << request.scene_json;
        }

        json pairwise = json::array();
        for (const auto& pr : request.pairwise) {
            pairwise.push_back(
                json{{"a", pr.a}, {"b", pr.b}, {"r_volume", pr.report.r_volume}});
        }
        const json req{{"scene_path", snapshot.string()},
                       {"object_id", request.offending_object_id},
                       {"max_penetration_depth", request.max_penetration_depth},
                       {"pairwise_r_volume", pairwise}};

        std::string output;
        const int rc = run_subprocess(command, req.dump() + "\n", output);
        std::error_code ec;
        std::filesystem::remove(snapshot, ec);
        if (rc != 0) {
            throw EditorFailureError("editor exited with code " + std::to_string(rc));
        }
        try {
            const json resp = json::parse(output);
            const std::string action = resp.at("action").get<std::string>();
            if (action == "no-change") return EditorResponse{};
            if (action == "replace") {
                return EditorResponse{false, resp.at("mesh_path").get<std::string>()};
            }
            throw EditorFailureError("unknown editor action '" + action + "'");
        } catch (const json::exception& e) {
            throw EditorFailureError(std::string("malformed editor response: ") + e.what());
        }
    };
}

Editor make_editor(const std::string& name) {
    if (name.empty() || name == "mock") return make_mock_editor();
    constexpr std::string_view kExternalPrefix = "external:";
    if (name.rfind(kExternalPrefix, 0) == 0) {
        return make_subprocess_editor(std::string(name.substr(kExternalPrefix.size())));
    }
    throw EditorFailureError("unknown editor '" + name + "'");
}

ComposedScene refinement_loop(const ComposedScene& scene, const SceneSpec& spec,
                              const Editor& editor) {
    spec.validate();
    const double trigger = spec.refinement.trigger_threshold.value_or(scene.epsilon_used);

    ComposedScene current = scene;
    ComposedScene best = scene;
    double best_depth = worst_pair_depth(scene);

    SceneState state;
    bool state_loaded = false;

    for (int iteration = 0; iteration < spec.refinement.max_iterations; ++iteration) {
        const double depth = worst_pair_depth(current);
        if (depth <= trigger) break;

        EditorRequest request;
        request.scene_json = composed_scene_to_json(current);
        request.offending_object_id = worst_offender(current);
        if (request.offending_object_id.empty()) break; // nothing refinable
        request.max_penetration_depth = depth;
        request.pairwise = current.pairwise;

        EditorResponse response;
        try {
            response = editor(request);
        } catch (const EditorFailureError&) {
            return best; // best scene so far
        }
        if (response.no_change) break;

        // Rebuild geometry lazily on the first replacement.
        SceneSpec working = spec;
        for (size_t i = 0; i < working.objects.size(); ++i) {
            working.objects[i].asset_mesh_path = current.find(working.objects[i].id)->asset_mesh_path;
        }
        if (!state_loaded) {
            state = load_scene_state(working);
            for (size_t i = 0; i < working.objects.size(); ++i) {
                if (current.objects[i].failed) continue;
                refresh_posed(state, current, working, i);
                bake_object_grid(state, working, i, current.warnings);
            }
            state_loaded = true;
        }

        const size_t offender = anchor_index_of(working, request.offending_object_id);
        TriangleMesh replacement;
        try {
            replacement = load_mesh(response.replacement_mesh_path);
        } catch (const Error&) {
            return best; // a replacement that does not load is an editor failure
        }
        state.assets[offender] = std::move(replacement);
        ObjectResult& result = *const_cast<ObjectResult*>(current.find(request.offending_object_id));
        result.asset_mesh_path = response.replacement_mesh_path;

        // Stage 2 only, against everything else that is placed.
        UnionField field;
        for (size_t i = 0; i < working.objects.size(); ++i) {
            if (i == offender || current.objects[i].failed || !state.grids[i]) continue;
            field.add(*state.grids[i]);
        }
        try {
            place_object(state, current, working, offender, field);
            bake_object_grid(state, working, offender, current.warnings);
        } catch (Error& e) {
            result.failed = true;
            result.failure = e.what();
            current.warnings.push_back("refinement of '" + request.offending_object_id +
                                       "' failed: " + std::string(e.what()));
            return best;
        }

        for (size_t i = 0; i < working.objects.size(); ++i) {
            if (i == offender || current.objects[i].failed || !state.grids[i]) continue;
            compute_pair_report(current, working, state, std::min(i, offender),
                                std::max(i, offender));
        }

        const double new_depth = worst_pair_depth(current);
        if (new_depth < best_depth) {
            best_depth = new_depth;
            best = current;
        }
    }
    return current;
}

} // namespace meshcompose
