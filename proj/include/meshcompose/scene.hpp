#pragma once

#include "meshcompose/collision.hpp"
#include "meshcompose/metrics.hpp"
#include "meshcompose/registration.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace meshcompose {

struct SceneObject {
    std::string id;
    std::string asset_mesh_path;
    std::string guidance_mesh_path;
    bool anchor_hint = false;
};

struct SceneParams {
    std::uint64_t seed = 1;
    size_t sample_n = 5000;
    int sdf_resolution = 128;
    double sdf_padding = 0.2;
    std::uint64_t metrics_n = 1000000; // Monte Carlo samples per pairwise report
    std::string registrar = "ppf-ransac";
    bool strict = false; // sequential composition: abort on the first failed object
    IcpParams icp;
    CollisionParams collision;
    // collision.epsilon <= 0 means "derive as 0.005 * anchor AABB diagonal".
};

struct RefinementSpec {
    bool enabled = false;
    int max_iterations = 5;
    std::optional<double> trigger_threshold; // unset = collision epsilon
    std::string editor = "mock";             // "mock" or "external:<command>"
};

struct SceneSpec {
    std::vector<SceneObject> objects;
    SceneParams params;
    RefinementSpec refinement;

    // Throws InvalidSceneSpecError: needs >= 2 objects, unique ids, at most
    // one anchor hint.
    void validate() const;
};

SceneSpec load_scene_spec(const std::string& path);
void save_scene_spec(const SceneSpec& spec, const std::string& path);

// Seed stream used for the object at `index` in spec order; exposed so a
// composition can be reproduced piecewise (e.g., re-running one object's
// registration in isolation).
std::uint64_t scene_object_seed(const SceneSpec& spec, size_t index);

struct ObjectResult {
    std::string id;
    std::string asset_mesh_path;
    SimilarityTransform transform;
    bool is_anchor = false;
    bool failed = false;
    std::string failure;
    // Registration trace
    double obb_scale = 1.0;
    int coarse_inliers = 0;
    double coarse_inlier_ratio = 0.0;
    double icp_rmse = 0.0;
    int icp_iterations = 0;
    bool icp_converged = false;
    // Stage-2 optimization trace (absent for the anchor)
    std::optional<OptimizationTrace> optimization;
};

struct PairReport {
    std::string a;
    std::string b;
    IntersectionReport report;
};

struct ComposedScene {
    std::string anchor_id;
    double epsilon_used = 0.0; // resolved collision safety margin
    std::vector<ObjectResult> objects;
    std::vector<PairReport> pairwise;
    std::vector<std::string> warnings;

    const ObjectResult* find(const std::string& id) const;
};

// Serialization (JSON; transforms as {scale, rotation_quat [w,x,y,z], translation}).
std::string composed_scene_to_json(const ComposedScene& scene);
ComposedScene composed_scene_from_json(const std::string& json_text);
void save_composed_scene(const ComposedScene& scene, const std::string& path);
ComposedScene load_composed_scene(const std::string& path);

// Merged OBJ export with one group per object, posed by its transform.
void export_scene_obj(const ComposedScene& scene, const std::string& path);

// Anchor choice: honor the hint when present; otherwise the guidance mesh
// with the largest AABB footprint on the x-y plane of the guidance frame,
// ties broken by larger AABB volume, then by lowest list index.
std::string select_anchor(const SceneSpec& spec);

// Two-object composition: stage 1 aligns the anchor to its guidance
// (global-to-local); stage 2 bakes the anchor SDF at the aligned pose,
// initializes the remaining object from OBB scale + coarse registration,
// and runs the annealed placement optimizer. Pairwise metrics attached.
ComposedScene compose_pair(const SceneSpec& spec);

// Sequential multi-object composition: the anchor is selected once, the
// other objects are placed in list order, and after each placement the
// union of placed SDFs (pointwise minimum) becomes the collision
// reference. In strict mode the first failure aborts; otherwise failed
// objects are marked and composition continues.
ComposedScene compose_sequential(const SceneSpec& spec);

// Dispatches to compose_pair / compose_sequential and, when enabled, runs
// the refinement loop with the configured editor.
ComposedScene compose_scene(const SceneSpec& spec);

// ---- Agentic-refinement seam -------------------------------------------

struct EditorRequest {
    std::string scene_json;           // snapshot of the current ComposedScene
    std::string offending_object_id;
    double max_penetration_depth = 0.0;
    std::vector<PairReport> pairwise;
};

struct EditorResponse {
    bool no_change = true;
    std::string replacement_mesh_path;
};

using Editor = std::function<EditorResponse(const EditorRequest&)>;

// Bundled default: always answers "no-change".
Editor make_mock_editor();

// Subprocess editor: request JSON on stdin, response JSON
// ({"action":"no-change"} or {"action":"replace","mesh_path":...}) on
// stdout; nonzero exit or malformed output raises EditorFailureError.
Editor make_subprocess_editor(const std::string& command);

Editor make_editor(const std::string& name); // "mock" or "external:<command>"

// Refinement loop: up to max_iterations rounds, stop as soon as the max
// pairwise penetration depth is at or below the trigger threshold;
// otherwise ask the editor about the worst-offending object, and on a
// replacement recompose that object (stage 2 only) and re-measure.
// Editor failure aborts the loop and returns the best scene so far.
ComposedScene refinement_loop(const ComposedScene& scene, const SceneSpec& spec,
                              const Editor& editor);

} // namespace meshcompose
