#pragma once

#include "meshcompose/mesh.hpp"
#include "meshcompose/transform.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace meshcompose {

struct Correspondences {
    struct Pair {
        int source = 0;
        int target = 0;
        double sq_dist = 0.0;
    };
    std::vector<Pair> pairs;
    std::vector<double> weights; // empty = uniform

    size_t size() const { return pairs.size(); }
};

struct IcpParams {
    int max_iterations = 50;
    double convergence_tol = 1e-10;          // relative objective change
    double trim_fraction = 0.1;              // worst pairs dropped, in [0,1)
    std::optional<double> correspondence_max_dist; // model units
};

struct IcpResult {
    SimilarityTransform transform;
    double final_rmse = 0.0;
    int iterations_run = 0;
    bool converged = false;
};

// Closed-form weighted least-squares similarity fit (Umeyama 1991):
// minimizes sum_i w_i |s R p_i + t - q_i|^2 with R a proper rotation
// (reflections corrected through the determinant-sign fix in the SVD).
// If with_scale is false, s = 1.
// Throws InsufficientPointsError (< 3 points) or
// DegenerateConfigurationError (cross-covariance rank < 2).
SimilarityTransform umeyama_solve(const std::vector<Eigen::Vector3d>& source_pts,
                                  const std::vector<Eigen::Vector3d>& target_pts,
                                  const std::vector<double>& weights = {},
                                  bool with_scale = true);

// Nearest neighbor in `target` for every point of `transformed_source`,
// with pairs beyond correspondence_max_dist rejected and then the
// trim_fraction worst-distance pairs dropped (floor(trim * n) pairs; ties
// by source index). Output pairs are sorted by source index.
// Throws NoCorrespondencesError when every pair is rejected.
Correspondences find_correspondences(const PointCloud& transformed_source,
                                     const PointCloud& target, const IcpParams& params);

// Scale-aware ICP: alternates correspondence search at the current pose
// with a full similarity Umeyama solve until the relative objective change
// drops below convergence_tol or max_iterations is hit. Returns the
// best-RMSE transform seen.
IcpResult scale_aware_icp(const PointCloud& source, const PointCloud& target,
                          const SimilarityTransform& init, const IcpParams& params);

struct CoarseRegistrationResult {
    SimilarityTransform transform;
    int inliers = 0;
    double inlier_ratio = 0.0;
};

// Coarse global registration behind a named extension point.
// The default ("ppf-ransac") computes point-pair-feature histograms over a
// neighborhood radius of 5% of the target bounding-box diagonal, matches
// descriptors by nearest neighbor, and runs 50,000 sample-consensus
// iterations over 3-point rigid hypotheses with an inlier threshold of
// 2.5% of the diagonal. scale_hint is applied to the source internally and
// composed into the returned transform. Deterministic given the seed.
// Throws RegistrationFailedError when the best hypothesis has < 10 inliers.
CoarseRegistrationResult coarse_global_register(const PointCloud& source,
                                                const PointCloud& target,
                                                double scale_hint, std::uint64_t seed);

// Registrar selection: "ppf-ransac" (default) or "external:<command>".
// An external registrar receives the scaled source and the target as ascii
// XYZ on stdin (each cloud preceded by its point count) and must print a
// 3x4 rigid matrix followed by a scale factor.
CoarseRegistrationResult run_coarse_registrar(const std::string& name,
                                              const PointCloud& source,
                                              const PointCloud& target,
                                              double scale_hint, std::uint64_t seed);

struct AlignmentResult {
    IcpResult icp;
    double obb_scale = 1.0;
    CoarseRegistrationResult coarse;
    bool low_confidence = false; // coarse inlier ratio < 0.2
};

struct AlignmentParams {
    size_t sample_n = 5000;
    IcpParams icp;
    std::string registrar = "ppf-ransac";
};

// The shared front half of the global-to-local pipeline: surface sampling,
// OBB scale estimate, and coarse global registration. Both the ICP
// refinement and the collision-aware placement start from this state, so
// the two paths see identical clouds and initializations for a given seed.
struct CoarseStage {
    PointCloud source;
    PointCloud guidance;
    double obb_scale = 1.0;
    CoarseRegistrationResult coarse;
};

CoarseStage run_coarse_stage(const TriangleMesh& source_mesh, const TriangleMesh& guidance_mesh,
                             std::uint64_t seed, const AlignmentParams& params);

// IcpParams with the correspondence gate defaulted to 10% of the guidance
// cloud diagonal when unset.
IcpParams effective_icp_params(const IcpParams& params, const PointCloud& guidance);

// Full global-to-local pipeline: sample both surfaces, estimate scale from
// the OBBs, coarse global registration, then scale-aware ICP refinement
// from that initialization. When icp.correspondence_max_dist is unset, a
// default of 10% of the guidance cloud diagonal is applied so points with
// no counterpart (holes, crops) cannot drag the refinement.
// Stage failures are rethrown with the stage name in the message.
AlignmentResult global_to_local_align(const TriangleMesh& source_mesh,
                                      const TriangleMesh& guidance_mesh,
                                      std::uint64_t seed, const AlignmentParams& params);

} // namespace meshcompose
