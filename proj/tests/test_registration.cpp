#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "meshcompose/errors.hpp"
#include "meshcompose/obb.hpp"
#include "meshcompose/primitives.hpp"
#include "meshcompose/registration.hpp"
#include "meshcompose/rng.hpp"
#include "meshcompose/synthetic.hpp"

#include "test_util.hpp"

#include <cmath>

using namespace meshcompose;
using testutil::deg;
using testutil::pose_error;
using testutil::random_similarity;

namespace {

std::vector<Eigen::Vector3d> random_points(Prng& rng, int n, double extent = 1.0) {
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        pts.emplace_back(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                         rng.uniform(-extent, extent));
    }
    return pts;
}

std::vector<Eigen::Vector3d> apply_all(const SimilarityTransform& t,
                                       const std::vector<Eigen::Vector3d>& pts) {
    std::vector<Eigen::Vector3d> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(t.apply(p));
    return out;
}

double pair_objective(const SimilarityTransform& t, const std::vector<Eigen::Vector3d>& src,
                      const std::vector<Eigen::Vector3d>& tgt) {
    double acc = 0.0;
    for (size_t i = 0; i < src.size(); ++i) acc += (t.apply(src[i]) - tgt[i]).squaredNorm();
    return acc;
}

// An asymmetric test mesh shared by the ICP cases.
TriangleMesh test_constellation() {
    return merge_meshes({make_box({1.0, 0.8, 0.6}),
                         make_icosphere(0.35, 2, {0.95, 0.25, 0.0}),
                         make_cylinder(0.2, 0.7, 24, {-0.85, 0.0, 0.3})});
}

} // namespace

TEST_CASE("umeyama_solve identity and exact recovery") {
    Prng rng(1);
    const auto src = random_points(rng, 100);

    const SimilarityTransform id = umeyama_solve(src, src, {}, true);
    CHECK(id.scale() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rotation_angle_between(id.rotation(), Eigen::Matrix3d::Identity()) < 1e-12);
    CHECK(id.translation().norm() < 1e-12);

    for (int trial = 0; trial < 50; ++trial) {
        const auto truth = random_similarity(rng);
        const auto tgt = apply_all(truth, src);
        const auto est = umeyama_solve(src, tgt, {}, true);
        const auto err = pose_error(est, truth, 1.0);
        CHECK(err.rotation < 1e-9);
        CHECK(err.scale_rel < 1e-9);
        CHECK((est.translation() - truth.translation()).norm() < 1e-9);
    }
}

TEST_CASE("umeyama_solve rejects bad input") {
    Prng rng(2);
    const auto two = random_points(rng, 2);
    CHECK_THROWS_AS(umeyama_solve(two, two, {}, true), InsufficientPointsError);

    // Collinear points: rank-1 cross covariance.
    std::vector<Eigen::Vector3d> line;
    for (int i = 0; i < 10; ++i) line.emplace_back(i, 2.0 * i, -i);
    CHECK_THROWS_AS(umeyama_solve(line, line, {}, true), DegenerateConfigurationError);

    const auto pts = random_points(rng, 5);
    CHECK_THROWS_AS(umeyama_solve(pts, random_points(rng, 4), {}, true), LengthMismatchError);
    CHECK_THROWS_AS(umeyama_solve(pts, pts, {1, 1, 1}, true), LengthMismatchError);
}

TEST_CASE("umeyama_solve keeps det(R) = +1 on reflection-prone input") {
    Prng rng(3);
    // Near-planar cloud mapped through a reflection: the best proper
    // rotation must still have determinant +1.
    std::vector<Eigen::Vector3d> src;
    for (int i = 0; i < 200; ++i) {
        src.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), 1e-9 * rng.uniform(-1, 1));
    }
    std::vector<Eigen::Vector3d> tgt;
    for (const auto& p : src) tgt.emplace_back(p.x(), -p.y(), p.z()); // mirror
    const auto est = umeyama_solve(src, tgt, {}, true);
    CHECK(est.rotation().determinant() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("umeyama_solve with scale disabled returns s = 1") {
    Prng rng(4);
    const auto src = random_points(rng, 60);
    const auto truth = random_similarity(rng);
    const auto tgt = apply_all(truth, src);
    const auto est = umeyama_solve(src, tgt, {}, false);
    CHECK(est.scale() == 1.0);
}

TEST_CASE("umeyama_solve honors weights") {
    Prng rng(5);
    const auto src = random_points(rng, 80);
    const auto truth = random_similarity(rng);
    auto tgt = apply_all(truth, src);
    // Corrupt half the targets but give those pairs zero weight.
    std::vector<double> weights(src.size(), 1.0);
    for (size_t i = 0; i < src.size(); i += 2) {
        tgt[i] += Eigen::Vector3d(5, -3, 2);
        weights[i] = 0.0;
    }
    const auto est = umeyama_solve(src, tgt, weights, true);
    CHECK(rotation_angle_between(est.rotation(), truth.rotation()) < 1e-9);
    CHECK(est.scale() == doctest::Approx(truth.scale()).epsilon(1e-9));
}

TEST_CASE("umeyama solution beats random perturbations") {
    Prng rng(6);
    const auto src = random_points(rng, 120);
    auto tgt = apply_all(random_similarity(rng), src);
    // Noise so the optimum is strict.
    for (auto& q : tgt) {
        q += 0.01 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    }
    const auto est = umeyama_solve(src, tgt, {}, true);
    const double best = pair_objective(est, src, tgt);

    for (int probe = 0; probe < 10000; ++probe) {
        const double ds = std::exp(0.02 * rng.normal());
        const Eigen::Vector3d axis = rng.unit_vector();
        const double angle = 0.02 * std::abs(rng.normal());
        const Eigen::Matrix3d r =
            Eigen::AngleAxisd(angle, axis).toRotationMatrix() * est.rotation();
        const Eigen::Vector3d t =
            est.translation() + 0.02 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
        const SimilarityTransform probe_t(est.scale() * ds, r, t);
        CHECK(pair_objective(probe_t, src, tgt) >= best);
    }
}

TEST_CASE("find_correspondences identity, rejection, trimming") {
    PointCloud cloud;
    Prng rng(7);
    for (int i = 0; i < 10; ++i) {
        cloud.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    }

    IcpParams params;
    params.trim_fraction = 0.0;
    const Correspondences self = find_correspondences(cloud, cloud, params);
    REQUIRE(self.size() == 10);
    for (const auto& pair : self.pairs) {
        CHECK(pair.source == pair.target);
        CHECK(pair.sq_dist == 0.0);
    }

    // Shifted far beyond the gate: everything rejected.
    params.correspondence_max_dist = 0.05;
    PointCloud shifted = cloud;
    for (auto& p : shifted.points) p += Eigen::Vector3d(0.5, 0, 0); // 10x the gate
    CHECK_THROWS_AS(find_correspondences(shifted, cloud, params), NoCorrespondencesError);

    // Trimming drops exactly floor(trim * n) pairs.
    params.correspondence_max_dist.reset();
    params.trim_fraction = 0.2;
    const Correspondences trimmed = find_correspondences(shifted, cloud, params);
    CHECK(trimmed.size() == 8);
}

TEST_CASE("nearest-neighbor ties resolve to the lowest target index") {
    PointCloud target;
    target.points = {{1, 0, 0}, {-1, 0, 0}, {1, 0, 0}}; // duplicate of index 0 at index 2
    PointCloud source;
    source.points = {{1, 0, 0}, {0, 0, 0}};
    IcpParams params;
    params.trim_fraction = 0.0;
    const Correspondences corr = find_correspondences(source, target, params);
    REQUIRE(corr.size() == 2);
    CHECK(corr.pairs[0].target == 0); // exact duplicate: lowest index wins
    CHECK(corr.pairs[1].target == 0); // equidistant +-1: lowest index wins
}

TEST_CASE("umeyama solve never increases the objective on a fixed set") {
    Prng rng(8);
    const TriangleMesh mesh = test_constellation();
    const PointCloud source = sample_surface(mesh, 800, 21);
    const auto truth = random_similarity(rng, 0.5);
    const PointCloud target = transform_cloud(sample_surface(mesh, 800, 22), truth);

    IcpParams params;
    for (int trial = 0; trial < 20; ++trial) {
        const auto pose = random_similarity(rng, 0.5);
        const Correspondences corr =
            find_correspondences(transform_cloud(source, pose), target, params);
        std::vector<Eigen::Vector3d> src, tgt;
        double before = 0.0;
        for (const auto& pair : corr.pairs) {
            src.push_back(source.points[pair.source]);
            tgt.push_back(target.points[pair.target]);
            before += pair.sq_dist;
        }
        const auto solved = umeyama_solve(src, tgt, {}, true);
        CHECK(pair_objective(solved, src, tgt) <= before * (1.0 + 1e-12) + 1e-12);
    }
}

TEST_CASE("scale_aware_icp recovers a clean similarity") {
    const TriangleMesh mesh = test_constellation();
    const PointCloud source = sample_surface(mesh, 4000, 31);
    Prng rng(9);
    const Eigen::Matrix3d rot =
        Eigen::AngleAxisd(25.0 * testutil::kPi / 180.0, rng.unit_vector()).toRotationMatrix();
    const double diag = source.bounding_diagonal();
    const SimilarityTransform truth(1.3, rot, 0.1 * diag * Eigen::Vector3d(1, 1, 1).normalized());
    const PointCloud target = transform_cloud(source, truth);

    // Identity rotation after OBB scale pre-alignment.
    const double s0 = estimate_scale_from_obb(compute_obb(source), compute_obb(target));
    const SimilarityTransform init(s0, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero());

    IcpParams params;
    params.max_iterations = 100;
    params.convergence_tol = 1e-14;
    const IcpResult result = scale_aware_icp(source, target, init, params);
    CHECK(result.final_rmse < 1e-6);
    const auto err = pose_error(result.transform, truth, diag);
    CHECK(deg(err.rotation) < 0.1);
    CHECK(err.scale_rel < 1e-3);
}

TEST_CASE("scale_aware_icp tolerates 30% outliers with trimming") {
    const TriangleMesh mesh = test_constellation();
    PointCloud source = sample_surface(mesh, 3000, 41);
    Prng rng(10);
    // Within ICP's local basin (modest rotation); the outliers are the test.
    const Eigen::Matrix3d rot =
        Eigen::AngleAxisd(20.0 * testutil::kPi / 180.0, rng.unit_vector()).toRotationMatrix();
    const SimilarityTransform truth(1.2, rot, {0.15, -0.1, 0.2});
    const PointCloud target = transform_cloud(source, truth);

    // Corrupt 30% of the source with uniform junk inside its box.
    const auto [lo, hi] = source.bounding_box();
    for (size_t i = 0; i < source.size(); i += 3) {
        source.points[i] =
            Eigen::Vector3d(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                            rng.uniform(lo.z(), hi.z()));
    }

    // Coarse-style init: the truth perturbed by 10 degrees / 5% translation.
    const Eigen::Matrix3d wobble =
        Eigen::AngleAxisd(10.0 * testutil::kPi / 180.0, rng.unit_vector()).toRotationMatrix();
    const SimilarityTransform init(1.1 * truth.scale(), wobble * truth.rotation(),
                                   truth.translation() + Eigen::Vector3d(0.1, -0.05, 0.05));
    IcpParams params;
    params.max_iterations = 100;
    params.trim_fraction = 0.35;
    const IcpResult result = scale_aware_icp(source, target, init, params);
    CHECK(deg(rotation_angle_between(result.transform.rotation(), truth.rotation())) < 2.0);
}

TEST_CASE("scale_aware_icp iteration contract") {
    const TriangleMesh mesh = make_box({1, 1, 1});
    const PointCloud source = sample_surface(mesh, 500, 51);
    IcpParams params;
    params.max_iterations = 1;
    const IcpResult result =
        scale_aware_icp(source, source, SimilarityTransform::identity(), params);
    CHECK(result.iterations_run == 1);
}

TEST_CASE("coarse_global_register aligns full-overlap samplings") {
    const TriangleMesh mesh = test_constellation();
    Prng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const PointCloud source =
            sample_surface(mesh, 3000, 100 + static_cast<unsigned>(trial));
        const SimilarityTransform truth(
            1.0, rng.rotation(),
            Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)));
        const PointCloud target =
            transform_cloud(sample_surface(mesh, 3000, 200 + static_cast<unsigned>(trial)), truth);

        const auto result =
            coarse_global_register(source, target, 1.0, 77 + static_cast<unsigned>(trial));
        CHECK(deg(rotation_angle_between(result.transform.rotation(), truth.rotation())) < 5.0);
        CHECK(result.inliers >= 10);
    }
}

TEST_CASE("coarse_global_register fails on unstructured data") {
    Prng rng(12);
    PointCloud a, b;
    for (int i = 0; i < 50; ++i) {
        a.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        b.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    CHECK_THROWS_AS(coarse_global_register(a, b, 1.0, 5), RegistrationFailedError);
}

TEST_CASE("coarse_global_register is deterministic") {
    const TriangleMesh mesh = test_constellation();
    const PointCloud source = sample_surface(mesh, 2000, 61);
    Prng rng(13);
    const PointCloud target =
        transform_cloud(sample_surface(mesh, 2000, 62), random_similarity(rng, 0.5, 1.0, 1.0));
    const auto first = coarse_global_register(source, target, 1.0, 99);
    const auto second = coarse_global_register(source, target, 1.0, 99);
    CHECK(first.inliers == second.inliers);
    CHECK((first.transform.translation() - second.transform.translation()).norm() == 0.0);
    CHECK((first.transform.rotation() - second.transform.rotation()).norm() == 0.0);
    CHECK(first.transform.scale() == second.transform.scale());
}

TEST_CASE("global_to_local_align recovers a clean case") {
    const TriangleMesh mesh = test_constellation();
    Prng rng(14);
    const auto truth = random_similarity(rng, 1.0, 0.6, 1.8);
    const TriangleMesh guidance = transform_mesh(mesh, truth);

    AlignmentParams params;
    const AlignmentResult result = global_to_local_align(mesh, guidance, 7, params);
    const auto err = pose_error(result.icp.transform, truth, guidance.bounding_diagonal());
    CHECK(deg(err.rotation) < 0.06);
    CHECK(err.translation_rel < 1e-3);
    CHECK(err.scale_rel < 1e-3);
}

TEST_CASE("global_to_local_align survives guidance holes") {
    const auto dir = testutil::scratch_dir("reg-holes");
    const SyntheticCase scase = generate_synthetic_case(SyntheticKind::Holes, 3, dir);
    const TriangleMesh asset = load_mesh(scase.spec.objects[0].asset_mesh_path);
    const TriangleMesh guidance = load_mesh(scase.spec.objects[0].guidance_mesh_path);

    AlignmentParams params;
    const AlignmentResult result = global_to_local_align(asset, guidance, 17, params);
    const auto err =
        pose_error(result.icp.transform, scase.ground_truth[0], guidance.bounding_diagonal());
    CHECK(deg(err.rotation) < 5.0);
    CHECK(err.scale_rel < 0.05);
}

TEST_CASE("global_to_local_align labels the failing stage") {
    const TriangleMesh a = test_constellation();
    Prng rng(15);
    // A guidance mesh with no structural relation to the source: a blob of
    // disconnected far-apart slivers.
    TriangleMesh junk;
    for (int i = 0; i < 1500; ++i) {
        const Eigen::Vector3d c(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const int base = static_cast<int>(junk.vertices.size());
        junk.vertices.push_back(c);
        junk.vertices.push_back(c +
                                0.5 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()));
        junk.vertices.push_back(c +
                                0.5 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()));
        junk.faces.push_back({base, base + 1, base + 2});
    }
    junk.finalize();

    AlignmentParams params;
    try {
        global_to_local_align(a, junk, 19, params);
        FAIL("expected RegistrationFailedError");
    } catch (const RegistrationFailedError& e) {
        CHECK(std::string(e.what()).find("stage 'coarse'") != std::string::npos);
    }
}

TEST_CASE("external registrar protocol round-trips") {
    // A pass-through registrar: echoes the identity rigid transform, so the
    // result equals the OBB scale hint alone.
    const TriangleMesh mesh = test_constellation();
    const PointCloud source = sample_surface(mesh, 500, 71);
    const PointCloud target = sample_surface(mesh, 500, 72);
    const std::string cmd = "cat > /dev/null; printf '1 0 0 0\\n0 1 0 0\\n0 0 1 0\\n1.0\\n'";
    const auto result = run_coarse_registrar("external:" + cmd, source, target, 1.25, 1);
    CHECK(result.transform.scale() == doctest::Approx(1.25));
    CHECK(rotation_angle_between(result.transform.rotation(), Eigen::Matrix3d::Identity()) <
          1e-12);

    CHECK_THROWS_AS(run_coarse_registrar("external:exit 3", source, target, 1.0, 1),
                    RegistrationFailedError);
    CHECK_THROWS_AS(run_coarse_registrar("no-such-registrar", source, target, 1.0, 1),
                    RegistrationFailedError);
}
