#include "meshcompose/registration.hpp"

#include "meshcompose/errors.hpp"
#include "meshcompose/kdtree.hpp"
#include "meshcompose/obb.hpp"
#include "meshcompose/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace meshcompose {

SimilarityTransform umeyama_solve(const std::vector<Eigen::Vector3d>& source_pts,
                                  const std::vector<Eigen::Vector3d>& target_pts,
                                  const std::vector<double>& weights, bool with_scale) {
    const size_t n = source_pts.size();
    if (target_pts.size() != n) {
        throw LengthMismatchError("source and target point counts differ");
    }
    if (n < 3) {
        throw InsufficientPointsError("umeyama_solve needs at least 3 point pairs");
    }
    if (!weights.empty() && weights.size() != n) {
        throw LengthMismatchError("weight count does not match point count");
    }

    double weight_sum = 0.0;
    auto weight = [&](size_t i) { return weights.empty() ? 1.0 : weights[i]; };
    for (size_t i = 0; i < n; ++i) weight_sum += weight(i);
    if (!(weight_sum > 0.0)) {
        throw DegenerateConfigurationError("correspondence weights sum to zero");
    }

    Eigen::Vector3d mu_p = Eigen::Vector3d::Zero();
    Eigen::Vector3d mu_q = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < n; ++i) {
        mu_p += weight(i) * source_pts[i];
        mu_q += weight(i) * target_pts[i];
    }
    mu_p /= weight_sum;
    mu_q /= weight_sum;

    Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
    double var_p = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d dp = source_pts[i] - mu_p;
        const Eigen::Vector3d dq = target_pts[i] - mu_q;
        sigma += weight(i) * dq * dp.transpose();
        var_p += weight(i) * dp.squaredNorm();
    }
    sigma /= weight_sum;
    var_p /= weight_sum;

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d d = svd.singularValues();
    if (!(d[0] > 0.0) || d[1] <= 1e-12 * d[0]) {
        throw DegenerateConfigurationError("cross-covariance rank < 2 (collinear points?)");
    }

    // Reflection fix: flip the smallest singular direction when needed.
    Eigen::Vector3d s_diag = Eigen::Vector3d::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
        s_diag[2] = -1.0;
    }
    const Eigen::Matrix3d rotation =
        svd.matrixU() * s_diag.asDiagonal() * svd.matrixV().transpose();

    double scale = 1.0;
    if (with_scale) {
        if (!(var_p > 0.0)) {
            throw DegenerateConfigurationError("source points are coincident");
        }
        scale = d.dot(s_diag) / var_p;
    }
    const Eigen::Vector3d translation = mu_q - scale * (rotation * mu_p);
    return SimilarityTransform(scale, rotation, translation);
}

namespace {

void validate_icp_params(const IcpParams& params) {
    if (params.max_iterations < 1) throw OutOfRangeError("max_iterations must be >= 1");
    if (!(params.convergence_tol > 0.0)) throw OutOfRangeError("convergence_tol must be > 0");
    if (params.trim_fraction < 0.0 || params.trim_fraction >= 1.0) {
        throw OutOfRangeError("trim_fraction must lie in [0, 1)");
    }
}

Correspondences find_correspondences_with_tree(const PointCloud& transformed_source,
                                               const KdTree& tree, const IcpParams& params) {
    struct Candidate {
        double sq_dist;
        int source;
        int target;
    };
    std::vector<Candidate> kept;
    kept.reserve(transformed_source.size());

    const double max_sq = params.correspondence_max_dist
                              ? *params.correspondence_max_dist * *params.correspondence_max_dist
                              : std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < transformed_source.size(); ++i) {
        double sq = 0.0;
        const int j = tree.nearest(transformed_source.points[i], &sq);
        if (sq <= max_sq) {
            kept.push_back({sq, static_cast<int>(i), j});
        }
    }
    if (kept.empty()) {
        throw NoCorrespondencesError("all correspondences rejected by the distance gate");
    }

    const auto n_drop = static_cast<size_t>(params.trim_fraction * static_cast<double>(kept.size()));
    if (n_drop > 0) {
        std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
            return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.source < b.source);
        });
        kept.resize(kept.size() - n_drop);
    }
    std::sort(kept.begin(), kept.end(),
              [](const Candidate& a, const Candidate& b) { return a.source < b.source; });

    Correspondences out;
    out.pairs.reserve(kept.size());
    for (const auto& c : kept) out.pairs.push_back({c.source, c.target, c.sq_dist});
    return out;
}

} // namespace

Correspondences find_correspondences(const PointCloud& transformed_source,
                                     const PointCloud& target, const IcpParams& params) {
    if (transformed_source.points.empty() || target.points.empty()) {
        throw InsufficientPointsError("correspondence search over an empty cloud");
    }
    validate_icp_params(params);
    const KdTree tree(target.points);
    return find_correspondences_with_tree(transformed_source, tree, params);
}

IcpResult scale_aware_icp(const PointCloud& source, const PointCloud& target,
                          const SimilarityTransform& init, const IcpParams& params) {
    if (source.points.empty() || target.points.empty()) {
        throw InsufficientPointsError("ICP over an empty cloud");
    }
    validate_icp_params(params);
    const KdTree tree(target.points);

    IcpResult result;
    result.transform = init;
    SimilarityTransform current = init;
    double best_rmse = std::numeric_limits<double>::infinity();
    double prev_objective = std::numeric_limits<double>::infinity();

    std::vector<Eigen::Vector3d> src_pts, tgt_pts;
    for (int iter = 1; iter <= params.max_iterations; ++iter) {
        const PointCloud moved = transform_cloud(source, current);
        const Correspondences corr = find_correspondences_with_tree(moved, tree, params);

        src_pts.clear();
        tgt_pts.clear();
        double objective_before = 0.0;
        for (const auto& pair : corr.pairs) {
            src_pts.push_back(source.points[pair.source]);
            tgt_pts.push_back(target.points[pair.target]);
            objective_before += pair.sq_dist;
        }

        const SimilarityTransform solved = umeyama_solve(src_pts, tgt_pts, {}, true);
        double objective = 0.0;
        for (size_t i = 0; i < src_pts.size(); ++i) {
            objective += (solved.apply(src_pts[i]) - tgt_pts[i]).squaredNorm();
        }
        // The closed-form solve minimizes over the fixed set, so it cannot
        // be worse than the pose the set was built at.
        assert(objective <= objective_before * (1.0 + 1e-9) + 1e-12);

        const double rmse = std::sqrt(objective / static_cast<double>(src_pts.size()));
        if (rmse < best_rmse) {
            best_rmse = rmse;
            result.transform = solved;
        }
        current = solved;
        result.iterations_run = iter;

        const double rel = std::abs(objective - prev_objective) /
                           std::max(prev_objective, 1e-30);
        if (rel < params.convergence_tol) {
            result.converged = true;
            break;
        }
        prev_objective = objective;
    }
    result.final_rmse = best_rmse;
    return result;
}

namespace {

template <typename Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (Error& e) {
        e.with_context(std::string("stage '") + stage + "'");
        throw;
    }
}

} // namespace

IcpParams effective_icp_params(const IcpParams& params, const PointCloud& guidance) {
    IcpParams out = params;
    if (!out.correspondence_max_dist) {
        out.correspondence_max_dist = 0.1 * guidance.bounding_diagonal();
    }
    return out;
}

namespace {

// Fraction of the guidance cloud with a transformed source point within
// 2.5% of its diagonal: the acceptance signal for a coarse attempt. When
// the guidance is a partial shell of the source, a correct pose covers
// nearly all of it, while a scale-collapsed fit covers only a patch.
double guidance_coverage(const PointCloud& source, const PointCloud& guidance,
                         const SimilarityTransform& t) {
    std::vector<Eigen::Vector3d> moved;
    const size_t stride = std::max<size_t>(1, source.size() / 1000);
    for (size_t i = 0; i < source.size(); i += stride) {
        moved.push_back(t.apply(source.points[i]));
    }
    const KdTree tree(moved);
    const double band = 0.025 * guidance.bounding_diagonal();
    const size_t gstride = std::max<size_t>(1, guidance.size() / 1000);
    size_t covered = 0;
    size_t total = 0;
    for (size_t i = 0; i < guidance.size(); i += gstride) {
        ++total;
        double sq = 0.0;
        tree.nearest(guidance.points[i], &sq);
        if (sq <= band * band) ++covered;
    }
    return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
}

} // namespace

CoarseStage run_coarse_stage(const TriangleMesh& source_mesh, const TriangleMesh& guidance_mesh,
                             std::uint64_t seed, const AlignmentParams& params) {
    CoarseStage stage;
    stage.source = staged("sampling", [&] {
        return sample_surface(source_mesh, params.sample_n, derive_seed(seed, 11));
    });
    stage.guidance = staged("sampling", [&] {
        return sample_surface(guidance_mesh, params.sample_n, derive_seed(seed, 12));
    });
    stage.obb_scale = staged("obb-scale", [&] {
        return estimate_scale_from_obb(compute_obb(stage.source), compute_obb(stage.guidance));
    });

    // Partial guidance (occlusion crops, large holes) biases the OBB scale
    // low, which can push the registrar into a shrunken local fit. Sweep a
    // few scale multipliers and keep the attempt that explains the most of
    // the guidance; the common healthy case accepts the first attempt.
    staged("coarse", [&] {
        constexpr double kAcceptCoverage = 0.7;
        const double multipliers[] = {1.0, 1.25, 1.6, 2.0, 2.6, 0.8};
        double best_coverage = -1.0;
        std::string first_error;
        for (size_t attempt = 0; attempt < std::size(multipliers); ++attempt) {
            try {
                const CoarseRegistrationResult result = run_coarse_registrar(
                    params.registrar, stage.source, stage.guidance,
                    stage.obb_scale * multipliers[attempt], derive_seed(seed, 13 + attempt));
                const double coverage =
                    guidance_coverage(stage.source, stage.guidance, result.transform);
                if (coverage > best_coverage) {
                    best_coverage = coverage;
                    stage.coarse = result;
                }
                if (coverage >= kAcceptCoverage) break;
            } catch (const Error& e) {
                if (first_error.empty()) first_error = e.what();
            }
        }
        if (best_coverage < 0.0) {
            throw RegistrationFailedError(first_error.empty() ? "all coarse attempts failed"
                                                              : first_error);
        }
        return 0;
    });
    return stage;
}

AlignmentResult global_to_local_align(const TriangleMesh& source_mesh,
                                      const TriangleMesh& guidance_mesh, std::uint64_t seed,
                                      const AlignmentParams& params) {
    const CoarseStage stage = run_coarse_stage(source_mesh, guidance_mesh, seed, params);

    AlignmentResult result;
    result.obb_scale = stage.obb_scale;
    result.coarse = stage.coarse;
    result.low_confidence = stage.coarse.inlier_ratio < 0.2;

    result.icp = staged("icp", [&] {
        if (params.icp.correspondence_max_dist) {
            return scale_aware_icp(stage.source, stage.guidance, stage.coarse.transform,
                                   params.icp);
        }
        // Coarse-to-fine gating: a wide gate to enter the basin, then
        // tighter gates so surface regions with no true counterpart (hole
        // rims, crop boundaries) stop attracting points. Each pass is
        // accepted only if it still explains the guidance; that rejects the
        // scale-collapse fixed point tight gates can otherwise fall into.
        const double diagonal = stage.guidance.bounding_diagonal();
        IcpResult best;
        best.transform = stage.coarse.transform;
        double best_coverage =
            guidance_coverage(stage.source, stage.guidance, stage.coarse.transform);
        for (const double gate : {0.1, 0.05, 0.025}) {
            IcpParams pass = params.icp;
            pass.correspondence_max_dist = gate * diagonal;
            IcpResult refined;
            try {
                refined = scale_aware_icp(stage.source, stage.guidance, best.transform, pass);
            } catch (const Error&) {
                break; // keep the best pass so far
            }
            const double coverage =
                guidance_coverage(stage.source, stage.guidance, refined.transform);
            if (coverage >= best_coverage - 0.02) {
                best = refined;
                best_coverage = std::max(best_coverage, coverage);
            }
        }
        return best;
    });
    return result;
}

} // namespace meshcompose
