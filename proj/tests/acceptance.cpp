// Acceptance suite: every release criterion at its pinned tolerance, one
// PASS/FAIL line per criterion. Exit code = number of failures.

#include "meshcompose/collision.hpp"
#include "meshcompose/errors.hpp"
#include "meshcompose/geometry.hpp"
#include "meshcompose/metrics.hpp"
#include "meshcompose/obb.hpp"
#include "meshcompose/primitives.hpp"
#include "meshcompose/registration.hpp"
#include "meshcompose/rng.hpp"
#include "meshcompose/scene.hpp"
#include "meshcompose/sdf.hpp"
#include "meshcompose/synthetic.hpp"

#include "test_util.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace meshcompose;
using testutil::deg;
using testutil::kPi;
using testutil::scratch_dir;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

Outcome pass(std::string detail) { return {true, std::move(detail)}; }
Outcome fail(std::string detail) { return {false, std::move(detail)}; }

// ---------------------------------------------------------------------------
// 1. Umeyama exactness
// ---------------------------------------------------------------------------
Outcome criterion_umeyama() {
    Prng rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Eigen::Vector3d> src;
        for (int i = 0; i < 100; ++i) {
            src.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        }
        const auto truth = testutil::random_similarity(rng);
        std::vector<Eigen::Vector3d> tgt;
        for (const auto& p : src) tgt.push_back(truth.apply(p));

        const auto est = umeyama_solve(src, tgt, {}, true);
        const double rot = rotation_angle_between(est.rotation(), truth.rotation());
        const double scale = std::abs(est.scale() - truth.scale()) / truth.scale();
        const double trans = (est.translation() - truth.translation()).norm() /
                             std::max(1.0, truth.translation().norm());
        worst = std::max({worst, rot, scale, trans});
        if (worst >= 1e-9) {
            return fail("component error " + std::to_string(worst) + " at trial " +
                        std::to_string(trial));
        }
    }
    std::ostringstream detail;
    detail << "1000 trials, worst component error " << worst;
    return pass(detail.str());
}

// ---------------------------------------------------------------------------
// 2. Scale-aware ICP robustness
// ---------------------------------------------------------------------------
Outcome criterion_icp_robustness() {
    int ok = 0;
    const int n_seeds = 50;
    for (int seed = 0; seed < n_seeds; ++seed) {
        const auto dir = scratch_dir("acc2-" + std::to_string(seed));
        const SyntheticCase c =
            generate_synthetic_case(SyntheticKind::Clean, 2000 + static_cast<unsigned>(seed), dir);
        const TriangleMesh asset = load_mesh(c.spec.objects[0].asset_mesh_path);
        const TriangleMesh guidance_mesh = load_mesh(c.spec.objects[0].guidance_mesh_path);
        const SimilarityTransform truth = c.ground_truth[0];

        const PointCloud source = sample_surface(asset, 5000, derive_seed(seed, 1));
        PointCloud guidance = sample_surface(guidance_mesh, 5000, derive_seed(seed, 2));
        const double diag = guidance.bounding_diagonal();

        // Gaussian point noise, sigma = 0.005 * diagonal.
        Prng noise(derive_seed(seed, 3));
        for (auto& p : guidance.points) {
            p += 0.005 * diag * Eigen::Vector3d(noise.normal(), noise.normal(), noise.normal());
        }

        // Coarse init = truth perturbed by 30 degrees and 0.1 diagonals.
        Prng pert(derive_seed(seed, 4));
        const Eigen::Matrix3d wobble =
            Eigen::AngleAxisd(30.0 * kPi / 180.0, pert.unit_vector()).toRotationMatrix();
        const SimilarityTransform init(truth.scale(), wobble * truth.rotation(),
                                       truth.translation() + 0.1 * diag * pert.unit_vector());

        IcpParams params;
        params.max_iterations = 100;
        const IcpResult result = scale_aware_icp(source, guidance, init, params);
        const double rot = deg(rotation_angle_between(result.transform.rotation(), truth.rotation()));
        const double scale = std::abs(result.transform.scale() - truth.scale()) / truth.scale();
        if (rot < 2.0 && scale < 0.02) ++ok;
    }
    std::ostringstream detail;
    detail << ok << "/" << n_seeds << " seeds within 2 deg / 2% (need >= 95%)";
    return ok * 100 >= 95 * n_seeds ? pass(detail.str()) : fail(detail.str());
}

// ---------------------------------------------------------------------------
// 3. Global-to-local under degradation
// ---------------------------------------------------------------------------
Outcome criterion_degraded_alignment() {
    std::ostringstream detail;
    bool all_pass = true;
    for (const auto kind : {SyntheticKind::Holes, SyntheticKind::Occluded}) {
        int ok = 0;
        const int n_seeds = 40;
        for (int seed = 0; seed < n_seeds; ++seed) {
            const auto dir = scratch_dir("acc3-" + to_string(kind) + "-" + std::to_string(seed));
            const SyntheticCase c =
                generate_synthetic_case(kind, 3000 + static_cast<unsigned>(seed), dir);
            const TriangleMesh asset = load_mesh(c.spec.objects[0].asset_mesh_path);
            const TriangleMesh guidance = load_mesh(c.spec.objects[0].guidance_mesh_path);
            try {
                AlignmentParams params;
                const AlignmentResult result =
                    global_to_local_align(asset, guidance, derive_seed(seed, 5), params);
                const auto err = testutil::pose_error(result.icp.transform, c.ground_truth[0],
                                                      guidance.bounding_diagonal());
                if (deg(err.rotation) < 5.0 && err.translation_rel < 0.02 && err.scale_rel < 0.05) {
                    ++ok;
                }
            } catch (const Error&) {
                // counts as a failed seed
            }
        }
        detail << to_string(kind) << " " << ok << "/" << n_seeds << " ";
        all_pass = all_pass && ok * 100 >= 85 * n_seeds;
    }
    detail << "(need >= 85% each)";
    return all_pass ? pass(detail.str()) : fail(detail.str());
}

// ---------------------------------------------------------------------------
// 4. SDF fidelity
// ---------------------------------------------------------------------------
Outcome criterion_sdf_fidelity() {
    const TriangleMesh sphere = make_icosphere(1.0, 4);
    const SdfGrid grid = bake_sdf(sphere, 128, 0.2);
    const Aabb box = grid.box();

    Prng rng(4001);
    double worst_value = 0.0;
    for (int i = 0; i < 10000; ++i) {
        Eigen::Vector3d p;
        for (int a = 0; a < 3; ++a) p[a] = rng.uniform(box.min[a], box.max[a]);
        const double analytic = p.norm() - 1.0;
        worst_value = std::max(worst_value, std::abs(query(grid, p).value - analytic));
    }
    if (worst_value >= 1.5 * grid.spacing) {
        return fail("max |phi - analytic| = " + std::to_string(worst_value) + " vs " +
                    std::to_string(1.5 * grid.spacing));
    }

    const double h = grid.spacing / 10.0;
    int tested = 0;
    double worst_grad = 0.0;
    for (int i = 0; i < 100000 && tested < 2000; ++i) {
        Eigen::Vector3d p;
        for (int a = 0; a < 3; ++a) p[a] = rng.uniform(box.min[a], box.max[a]);
        bool interior = true;
        for (int a = 0; a < 3; ++a) {
            const double cell = (p[a] - grid.origin[a]) / grid.spacing;
            const double frac = cell - std::floor(cell);
            if (frac < 0.25 || frac > 0.75) interior = false;
        }
        if (!interior) continue;
        const FieldSample s = query(grid, p);
        if (s.gradient.norm() < 0.1) continue;
        ++tested;
        Eigen::Vector3d fd;
        for (int a = 0; a < 3; ++a) {
            Eigen::Vector3d hi = p, lo = p;
            hi[a] += h;
            lo[a] -= h;
            fd[a] = (query(grid, hi).value - query(grid, lo).value) / (2 * h);
        }
        worst_grad = std::max(worst_grad, (fd - s.gradient).norm() / s.gradient.norm());
    }
    if (tested < 1000 || worst_grad >= 1e-3) {
        return fail("gradient check: " + std::to_string(tested) + " probes, worst rel err " +
                    std::to_string(worst_grad));
    }
    std::ostringstream detail;
    detail << "value err " << worst_value << " (< " << 1.5 * grid.spacing << "), grad rel err "
           << worst_grad << " over " << tested << " probes";
    return pass(detail.str());
}

// ---------------------------------------------------------------------------
// 5. Eq. 2 / Eq. 3 gradient correctness
// ---------------------------------------------------------------------------
Outcome criterion_gradients() {
    const TriangleMesh sphere = make_icosphere(1.0, 3);
    const SdfGrid grid = bake_sdf(sphere, 48, 0.25);
    const GridField field(grid);
    CollisionParams params;
    params.epsilon = 0.1;
    params.lambda = 0.003;
    const double beta = 1.7;
    const double h = 1e-5;

    Prng rng(5001);
    int tested = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 2000 && tested < 100; ++trial) {
        const SimilarityTransform pose(rng.uniform(0.9, 1.1), rng.rotation(),
                                       0.05 * rng.unit_vector());
        const SimilarityTransform inv = pose.inverse();
        PointCloud pts;
        std::vector<Eigen::Vector3d> targets;
        bool smooth = true;
        for (int i = 0; i < 6; ++i) {
            Eigen::Vector3d q;
            for (int a = 0; a < 3; ++a) {
                const auto cells = static_cast<double>(grid.dims[a] - 1);
                const double cell = std::floor(rng.uniform(cells * 0.25, cells * 0.75));
                q[a] = grid.origin[a] + grid.spacing * (cell + 0.5 + rng.uniform(-0.2, 0.2));
            }
            const double phi = field.sample(q).value;
            if (std::abs(phi) < 0.01 || std::abs(phi - params.epsilon) < 0.01) smooth = false;
            pts.points.push_back(inv.apply(q));
            targets.push_back(pts.points.back() + 0.05 * rng.unit_vector());
        }
        if (!smooth) continue;
        ++tested;

        // Eq. 3 gradient (which contains the Eq. 2 gradient via beta).
        const auto [value, grad] = composition_objective(pts, targets, field, pose, params, beta);
        for (int coord = 0; coord < 7; ++coord) {
            PoseDelta delta;
            if (coord == 0) delta.log_scale = h;
            else if (coord < 4) delta.rotation[coord - 1] = h;
            else delta.translation[coord - 4] = h;
            const double v_hi =
                composition_objective(pts, targets, field, apply_delta(pose, delta), params, beta)
                    .first;
            const double v_lo = composition_objective(pts, targets, field,
                                                      apply_delta(pose, delta * -1.0), params, beta)
                                    .first;
            const double fd = (v_hi - v_lo) / (2 * h);
            double analytic = 0.0;
            if (coord == 0) analytic = grad.log_scale;
            else if (coord < 4) analytic = grad.rotation[coord - 1];
            else analytic = grad.translation[coord - 4];
            const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-6});
            worst = std::max(worst, std::abs(fd - analytic) / scale);
        }

        // Bare Eq. 2 gradient.
        const auto [cval, cgrad] = collision_loss(field, pts, pose, params.epsilon, params.lambda);
        PoseDelta delta;
        delta.translation = Eigen::Vector3d(h, 0, 0);
        const double c_hi =
            collision_loss(field, pts, apply_delta(pose, delta), params.epsilon, params.lambda)
                .first;
        const double c_lo = collision_loss(field, pts, apply_delta(pose, delta * -1.0),
                                           params.epsilon, params.lambda)
                                .first;
        const double fd = (c_hi - c_lo) / (2 * h);
        const double scale = std::max({std::abs(fd), std::abs(cgrad.translation.x()), 1e-6});
        worst = std::max(worst, std::abs(fd - cgrad.translation.x()) / scale);
    }
    std::ostringstream detail;
    detail << tested << " poses, worst relative error " << worst;
    return (tested >= 100 && worst < 1e-3) ? pass(detail.str()) : fail(detail.str());
}

// ---------------------------------------------------------------------------
// 6. Beta schedule
// ---------------------------------------------------------------------------
Outcome criterion_beta_schedule() {
    if (beta_schedule(0, 100, 3.0) != 0.0) return fail("beta(0) != 0");
    if (beta_schedule(100, 100, 3.0) != 3.0) return fail("beta(100) != 3.0");

    // Trace from a tiny placement run must match the formula exactly.
    SdfGrid far_grid;
    far_grid.origin = Eigen::Vector3d(100, 100, 100);
    far_grid.spacing = 1.0;
    far_grid.dims = {2, 2, 2};
    far_grid.values.assign(8, 50.0f);

    PointCloud cloud;
    Prng rng(6001);
    for (int i = 0; i < 50; ++i) {
        cloud.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    CollisionParams params; // k_max = 100, beta_max = 3.0 defaults
    params.inner_steps = 1;
    params.objective_tol = 0.0; // never stall: record every stage
    IcpParams icp;
    const OptimizationTrace trace =
        optimize_placement(cloud, cloud, far_grid, SimilarityTransform::identity(), params, icp);
    if (trace.stages.size() != 100) {
        return fail("expected 100 stage records, got " + std::to_string(trace.stages.size()));
    }
    for (const auto& s : trace.stages) {
        if (s.beta != beta_schedule(s.k, params.k_max, params.beta_max)) {
            return fail("beta mismatch at stage " + std::to_string(s.k));
        }
    }
    return pass("beta(0) = 0, beta(k_max) = 3.0, 100-stage trace matches the linear formula");
}

// ---------------------------------------------------------------------------
// 7. Collision resolution benchmark
// ---------------------------------------------------------------------------
Outcome criterion_collision_resolution() {
    int ok = 0;
    const int n_seeds = 30;
    int constructed = 0;
    double worst_rv = 0.0;
    for (int seed = 0; seed < n_seeds; ++seed) {
        const auto dir = scratch_dir("acc7-" + std::to_string(seed));
        const SyntheticCase c =
            generate_synthetic_case(SyntheticKind::Colliding, 7000 + static_cast<unsigned>(seed), dir);
        const TriangleMesh anchor_asset = load_mesh(c.spec.objects[0].asset_mesh_path);
        const TriangleMesh remain_asset = load_mesh(c.spec.objects[1].asset_mesh_path);
        const TriangleMesh anchor_guidance = load_mesh(c.spec.objects[0].guidance_mesh_path);
        const TriangleMesh remain_guidance = load_mesh(c.spec.objects[1].guidance_mesh_path);

        // The constructed conflict must measure 0.25..0.35 at ground truth.
        const TriangleMesh gt_anchor = transform_mesh(anchor_asset, c.ground_truth[0]);
        const TriangleMesh gt_remain = transform_mesh(remain_asset, c.ground_truth[1]);
        const double initial_rv =
            volume_intersection_ratio(gt_anchor, gt_remain, 1000000, derive_seed(seed, 70));
        if (initial_rv < 0.25 || initial_rv > 0.35) continue;
        ++constructed;

        // Stage 1 + stage 2 exactly as the pipeline runs them.
        AlignmentParams ap;
        const AlignmentResult anchor_align = global_to_local_align(
            anchor_asset, anchor_guidance, scene_object_seed(c.spec, 0), ap);
        const TriangleMesh posed_anchor = transform_mesh(anchor_asset, anchor_align.icp.transform);
        const SdfGrid grid = bake_sdf(posed_anchor, 64, 0.2);
        const double epsilon = 0.005 * posed_anchor.bounding_diagonal();

        const CoarseStage stage =
            run_coarse_stage(remain_asset, remain_guidance, scene_object_seed(c.spec, 1), ap);
        CollisionParams params; // defaults: lambda 0.003, beta_max 3.0, k_max 100
        params.epsilon = epsilon;
        const IcpParams icp = effective_icp_params(ap.icp, stage.guidance);
        const OptimizationTrace trace =
            optimize_placement(stage.source, stage.guidance, grid, stage.coarse.transform, params,
                               icp);

        const TriangleMesh posed_remain = transform_mesh(remain_asset, trace.final_transform);
        const double rv =
            volume_intersection_ratio(posed_anchor, posed_remain, 1000000, derive_seed(seed, 71));
        const double pen = trace.stages.back().max_penetration;
        const double diag = posed_remain.bounding_diagonal();
        const double retained =
            static_cast<double>(stage.source.size()) * (1.0 - icp.trim_fraction);
        const double rmse = std::sqrt(trace.stages.back().align_term / retained);
        worst_rv = std::max(worst_rv, rv);
        if (rv < 0.01 && pen < epsilon && rmse <= 0.2 * diag) ++ok;
    }
    std::ostringstream detail;
    detail << ok << "/" << constructed << " constructed seeds resolved (need >= 90%); worst final"
           << " r_volume " << worst_rv;
    return (constructed >= 25 && ok * 100 >= 90 * constructed) ? pass(detail.str())
                                                               : fail(detail.str());
}

// ---------------------------------------------------------------------------
// 8. beta_max = 0 equivalence with scale-aware ICP
// ---------------------------------------------------------------------------
Outcome criterion_beta_zero_equivalence() {
    int ok = 0;
    const int n_seeds = 20;
    double worst = 0.0;
    for (int seed = 0; seed < n_seeds; ++seed) {
        const auto dir = scratch_dir("acc8-" + std::to_string(seed));
        const SyntheticCase c =
            generate_synthetic_case(SyntheticKind::Clean, 8000 + static_cast<unsigned>(seed), dir);
        const TriangleMesh asset = load_mesh(c.spec.objects[0].asset_mesh_path);
        const SimilarityTransform truth = c.ground_truth[0];

        // Twin clouds (same sampling stream), so both solvers face the same
        // correspondence structure.
        const PointCloud source = sample_surface(asset, 3000, derive_seed(seed, 6));
        const PointCloud guidance = transform_cloud(source, truth);

        Prng pert(derive_seed(seed, 7));
        const Eigen::Matrix3d wobble =
            Eigen::AngleAxisd(8.0 * kPi / 180.0, pert.unit_vector()).toRotationMatrix();
        const SimilarityTransform init(
            truth.scale() * 1.05, wobble * truth.rotation(),
            truth.translation() + 0.03 * guidance.bounding_diagonal() * pert.unit_vector());

        // A grid the transformed points never touch: collision terms zero.
        SdfGrid far_grid;
        far_grid.origin = Eigen::Vector3d(1000, 1000, 1000);
        far_grid.spacing = 1.0;
        far_grid.dims = {2, 2, 2};
        far_grid.values.assign(8, 500.0f);

        IcpParams icp;
        icp.max_iterations = 200;
        icp.convergence_tol = 1e-15;
        CollisionParams params;
        params.beta_max = 0.0;
        const OptimizationTrace trace =
            optimize_placement(source, guidance, far_grid, init, params, icp);
        const IcpResult icp_result = scale_aware_icp(source, guidance, init, icp);

        const double ds = std::abs(trace.final_transform.scale() - icp_result.transform.scale());
        const double dr = (trace.final_transform.rotation() - icp_result.transform.rotation())
                              .cwiseAbs()
                              .maxCoeff();
        const double dt = (trace.final_transform.translation() -
                           icp_result.transform.translation())
                              .cwiseAbs()
                              .maxCoeff();
        const double gap = std::max({ds, dr, dt});
        worst = std::max(worst, gap);
        if (gap < 1e-6) ++ok;
    }
    std::ostringstream detail;
    detail << ok << "/" << n_seeds << " seeds equal to 1e-6 per component (worst gap " << worst
           << ")";
    return ok == n_seeds ? pass(detail.str()) : fail(detail.str());
}

// ---------------------------------------------------------------------------
// 9. R_volume estimator
// ---------------------------------------------------------------------------
Outcome criterion_r_volume() {
    const TriangleMesh a = make_box({1, 1, 1}, {0.5, 0.5, 0.5});
    const TriangleMesh b = make_box({1, 1, 1}, {1.0, 0.5, 0.5});
    const double est = volume_intersection_ratio(a, b, 1000000, 9001);
    if (std::abs(est - 1.0 / 3.0) >= 0.005) {
        return fail("offset cubes estimate " + std::to_string(est) + " vs 1/3");
    }
    const TriangleMesh far_box = make_box({1, 1, 1}, {5, 0.5, 0.5});
    if (volume_intersection_ratio(a, far_box, 100000, 9002) != 0.0) {
        return fail("disjoint cubes must give exactly 0");
    }
    if (volume_intersection_ratio(a, a, 100000, 9003) != 1.0) {
        return fail("coincident cubes must give exactly 1");
    }
    std::ostringstream detail;
    detail << "offset cubes " << est << " (|err| = " << std::abs(est - 1.0 / 3.0)
           << " < 0.005); disjoint = 0; coincident = 1";
    return pass(detail.str());
}

// ---------------------------------------------------------------------------
// 10. R_surface oracle equivalence
// ---------------------------------------------------------------------------
Outcome criterion_r_surface() {
    Prng rng(10001);
    for (int trial = 0; trial < 20; ++trial) {
        // Random primitive pairs, <= 2000 faces each, placed to overlap.
        const TriangleMesh a = merge_meshes(
            {make_box({rng.uniform(0.6, 1.4), rng.uniform(0.6, 1.4), rng.uniform(0.6, 1.4)}),
             make_icosphere(rng.uniform(0.25, 0.5), 2,
                            {rng.uniform(0.6, 1.2), 0, rng.uniform(-0.3, 0.3)})});
        const TriangleMesh b = transform_mesh(
            merge_meshes({make_box(
                             {rng.uniform(0.6, 1.4), rng.uniform(0.6, 1.4), rng.uniform(0.6, 1.4)}),
                          make_cylinder(rng.uniform(0.15, 0.3), rng.uniform(0.4, 0.9), 20,
                                        {0, rng.uniform(0.5, 1.0), 0})}),
            SimilarityTransform(rng.uniform(0.8, 1.25), rng.rotation(),
                                {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                                 rng.uniform(-0.8, 0.8)}));
        if (a.faces.size() > 2000 || b.faces.size() > 2000) {
            return fail("test mesh exceeds 2000 faces");
        }

        const SurfaceIntersection fast = surface_intersection_ratio(a, b);
        const SurfaceIntersection swapped = surface_intersection_ratio(b, a);
        if (fast.ratio != swapped.ratio) {
            return fail("asymmetry at trial " + std::to_string(trial));
        }

        std::set<int> oracle_a, oracle_b;
        for (size_t i = 0; i < a.faces.size(); ++i) {
            if (a.face_areas[i] <= 1e-14) continue;
            for (size_t j = 0; j < b.faces.size(); ++j) {
                if (b.face_areas[j] <= 1e-14) continue;
                if (triangle_triangle_intersect(a.face_vertex(static_cast<int>(i), 0),
                                                a.face_vertex(static_cast<int>(i), 1),
                                                a.face_vertex(static_cast<int>(i), 2),
                                                b.face_vertex(static_cast<int>(j), 0),
                                                b.face_vertex(static_cast<int>(j), 1),
                                                b.face_vertex(static_cast<int>(j), 2))) {
                    oracle_a.insert(static_cast<int>(i));
                    oracle_b.insert(static_cast<int>(j));
                }
            }
        }
        if (std::set<int>(fast.involved_a.begin(), fast.involved_a.end()) != oracle_a ||
            std::set<int>(fast.involved_b.begin(), fast.involved_b.end()) != oracle_b) {
            return fail("involved sets differ from brute force at trial " + std::to_string(trial));
        }
    }
    return pass("20 random pairs: sets equal brute force, f(A,B) == f(B,A) exactly");
}

// ---------------------------------------------------------------------------
// 11. End-to-end determinism
// ---------------------------------------------------------------------------
Outcome criterion_determinism() {
    const auto dir = scratch_dir("acc11");
    const SyntheticCase c = generate_synthetic_case(SyntheticKind::Clean, 11001, dir);
    const SceneSpec spec = load_scene_spec(dir + "/scene.json");
    const std::string first = composed_scene_to_json(compose_scene(spec));
    const std::string second = composed_scene_to_json(compose_scene(spec));
    if (first != second) return fail("two runs of compose produced different JSON");
    std::ostringstream detail;
    detail << "byte-identical ComposedScene JSON across two runs (" << first.size() << " bytes)";
    return pass(detail.str());
}

// ---------------------------------------------------------------------------
// 12. Refinement-loop contract
// ---------------------------------------------------------------------------
Outcome criterion_refinement() {
    const auto dir = scratch_dir("acc12");
    SceneSpec spec;
    save_obj(make_box({1, 1, 1}), dir + "/anchor.obj");
    save_obj(make_box({1, 1, 1}), dir + "/anchor_g.obj");
    save_obj(make_box({0.8, 0.8, 0.8}), dir + "/block.obj");
    save_obj(make_box({0.8, 0.8, 0.8}, {0, 0, 0.5}), dir + "/block_g.obj");
    spec.objects.push_back({"anchor", dir + "/anchor.obj", dir + "/anchor_g.obj", false});
    spec.objects.push_back({"block", dir + "/block.obj", dir + "/block_g.obj", false});
    spec.params.sample_n = 2000;
    spec.params.sdf_resolution = 48;
    spec.params.metrics_n = 30000;
    spec.refinement.enabled = true;

    const ComposedScene scene = compose_pair(spec);
    const double pen_before = scene.pairwise[0].report.max_penetration_depth;
    if (pen_before <= scene.epsilon_used) {
        return fail("benchmark scene did not produce a residual collision");
    }

    // Mock editor: at most one call, then termination.
    int mock_calls = 0;
    const Editor counted_mock = [&](const EditorRequest&) {
        ++mock_calls;
        return EditorResponse{};
    };
    refinement_loop(scene, spec, counted_mock);
    if (mock_calls > 1) return fail("mock editor called " + std::to_string(mock_calls) + " times");

    // Scripted shrinking editor: penetration strictly decreases on the
    // iteration where the replacement is applied.
    TriangleMesh pyramid;
    pyramid.vertices = {{-0.4, -0.4, 0.4},
                        {0.4, -0.4, 0.4},
                        {0.4, 0.4, 0.4},
                        {-0.4, 0.4, 0.4},
                        {0, 0, -0.4}};
    pyramid.faces = {{0, 2, 1}, {0, 3, 2}, {0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
    pyramid.finalize();
    save_obj(pyramid, dir + "/tip.obj");

    int scripted_calls = 0;
    const Editor scripted = [&](const EditorRequest&) {
        ++scripted_calls;
        if (scripted_calls == 1) return EditorResponse{false, dir + "/tip.obj"};
        return EditorResponse{};
    };
    const ComposedScene refined = refinement_loop(scene, spec, scripted);
    double pen_after = 0.0;
    for (const auto& pr : refined.pairwise) {
        pen_after = std::max(pen_after, pr.report.max_penetration_depth);
    }
    if (!(pen_after < pen_before)) {
        return fail("penetration did not decrease: " + std::to_string(pen_before) + " -> " +
                    std::to_string(pen_after));
    }

    // A stubborn editor can never be asked more than 5 times.
    int stubborn_calls = 0;
    const Editor stubborn = [&](const EditorRequest&) {
        ++stubborn_calls;
        return EditorResponse{false, dir + "/block.obj"};
    };
    refinement_loop(scene, spec, stubborn);
    if (stubborn_calls > 5) {
        return fail("editor consulted " + std::to_string(stubborn_calls) + " times (cap is 5)");
    }
    std::ostringstream detail;
    detail << "mock: " << mock_calls << " call; scripted: penetration " << pen_before << " -> "
           << pen_after << "; stubborn editor stopped after " << stubborn_calls << " calls";
    return pass(detail.str());
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "Umeyama exactness", criterion_umeyama},
        {2, "scale-aware ICP robustness", criterion_icp_robustness},
        {3, "global-to-local under degradation", criterion_degraded_alignment},
        {4, "SDF fidelity", criterion_sdf_fidelity},
        {5, "collision/composition gradient correctness", criterion_gradients},
        {6, "beta schedule", criterion_beta_schedule},
        {7, "collision resolution benchmark", criterion_collision_resolution},
        {8, "beta_max = 0 equivalence with scale-aware ICP", criterion_beta_zero_equivalence},
        {9, "R_volume estimator", criterion_r_volume},
        {10, "R_surface oracle equivalence", criterion_r_surface},
        {11, "end-to-end determinism", criterion_determinism},
        {12, "refinement-loop contract", criterion_refinement},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criterion.run();
        } catch (const std::exception& e) {
            outcome = fail(std::string("exception: ") + e.what());
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %2d: %s  (%s) [%.1fs]\n", outcome.pass ? "PASS" : "FAIL",
                    criterion.id, criterion.name, outcome.detail.c_str(), seconds);
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    std::printf("%zu criteria, %d failed\n", criteria.size(), failures);
    return failures;
}
