#include "meshcompose/errors.hpp"
#include "meshcompose/kdtree.hpp"
#include "meshcompose/registration.hpp"
#include "meshcompose/rng.hpp"

#include "subprocess.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace meshcompose {

namespace {

// Default registrar knobs. Radius / iteration / threshold values are part
// of the operation contract; the rest are internal.
constexpr double kRadiusFraction = 0.05;    // descriptor neighborhood, of target diagonal
constexpr int kRansacIterations = 50000;
constexpr double kInlierFraction = 0.025;   // inlier threshold, of target diagonal
constexpr int kMinInliers = 10;
constexpr size_t kMaxKeypoints = 1000;
constexpr int kNormalNeighbors = 16;
constexpr size_t kMaxDescriptorNeighbors = 96;
constexpr int kBinsPerFeature = 3;
constexpr int kDescriptorSize = kBinsPerFeature * kBinsPerFeature * kBinsPerFeature * kBinsPerFeature;

using Descriptor = std::array<float, kDescriptorSize>;

std::vector<Eigen::Vector3d> estimate_normals(const std::vector<Eigen::Vector3d>& points,
                                              const KdTree& tree) {
    std::vector<Eigen::Vector3d> normals(points.size(), Eigen::Vector3d::UnitZ());
    std::vector<int> nn;
    for (size_t i = 0; i < points.size(); ++i) {
        tree.knn(points[i], kNormalNeighbors, nn);
        if (nn.size() < 3) continue;
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (int j : nn) mean += points[j];
        mean /= static_cast<double>(nn.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int j : nn) {
            const Eigen::Vector3d d = points[j] - mean;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        normals[i] = eig.eigenvectors().col(0); // smallest variance
        // Sign is ambiguous; all descriptor features use absolute values.
    }
    return normals;
}

std::vector<int> stride_subsample(size_t n, size_t max_count) {
    const size_t stride = std::max<size_t>(1, n / max_count);
    std::vector<int> idx;
    idx.reserve(n / stride + 1);
    for (size_t i = 0; i < n; i += stride) idx.push_back(static_cast<int>(i));
    return idx;
}

// Point-pair-feature histogram: joint 3^4 histogram of
// (|d|/r, |n_p.d|, |n_q.d|, |n_p.n_q|) over neighbors within radius r.
// Soft (multilinear) binning keeps the histogram informative at the low
// neighbor counts a 5%-diagonal radius yields.
Descriptor compute_descriptor(const std::vector<Eigen::Vector3d>& points,
                              const std::vector<Eigen::Vector3d>& normals, const KdTree& tree,
                              int center, double radius, std::vector<int>& scratch) {
    Descriptor hist{};
    tree.radius_search(points[center], radius, scratch);

    size_t stride = 1;
    if (scratch.size() > kMaxDescriptorNeighbors) {
        stride = scratch.size() / kMaxDescriptorNeighbors + 1;
    }
    int used = 0;
    for (size_t k = 0; k < scratch.size(); k += stride) {
        const int j = scratch[k];
        if (j == center) continue;
        const Eigen::Vector3d d = points[j] - points[center];
        const double len = d.norm();
        if (len < 1e-12) continue;
        const Eigen::Vector3d dir = d / len;
        const double f[4] = {len / radius, std::abs(normals[center].dot(dir)),
                             std::abs(normals[j].dot(dir)),
                             std::abs(normals[center].dot(normals[j]))};

        // Each feature lands between two bins with linear weights.
        int lo_bin[4];
        double hi_w[4];
        for (int a = 0; a < 4; ++a) {
            const double x = std::clamp(f[a], 0.0, 1.0) * kBinsPerFeature - 0.5;
            const double fl = std::floor(x);
            lo_bin[a] = std::clamp(static_cast<int>(fl), 0, kBinsPerFeature - 1);
            hi_w[a] = std::clamp(x - fl, 0.0, 1.0);
            if (lo_bin[a] == kBinsPerFeature - 1) hi_w[a] = 0.0;
        }
        for (int mask = 0; mask < 16; ++mask) {
            double w = 1.0;
            int index = 0;
            for (int a = 0; a < 4; ++a) {
                const bool hi = (mask >> a) & 1;
                w *= hi ? hi_w[a] : 1.0 - hi_w[a];
                index = index * kBinsPerFeature + lo_bin[a] + (hi ? 1 : 0);
            }
            if (w > 0.0) hist[static_cast<size_t>(index)] += static_cast<float>(w);
        }
        ++used;
    }
    if (used > 0) {
        for (auto& h : hist) h /= static_cast<float>(used);
    }
    return hist;
}

int nearest_descriptor(const Descriptor& d, const std::vector<Descriptor>& candidates) {
    int best = 0;
    float best_dist = std::numeric_limits<float>::max();
    for (size_t i = 0; i < candidates.size(); ++i) {
        float acc = 0.0f;
        for (int k = 0; k < kDescriptorSize; ++k) {
            const float diff = d[static_cast<size_t>(k)] - candidates[i][static_cast<size_t>(k)];
            acc += diff * diff;
        }
        if (acc < best_dist) {
            best_dist = acc;
            best = static_cast<int>(i);
        }
    }
    return best;
}

} // namespace

CoarseRegistrationResult coarse_global_register(const PointCloud& source,
                                                const PointCloud& target, double scale_hint,
                                                std::uint64_t seed) {
    if (source.points.empty() || target.points.empty()) {
        throw InsufficientPointsError("coarse registration over an empty cloud");
    }
    if (!(scale_hint > 0.0)) {
        throw DegenerateSourceError("scale hint must be positive");
    }

    // Scale is resolved before matching; hypotheses are rigid.
    std::vector<Eigen::Vector3d> src(source.points.size());
    for (size_t i = 0; i < src.size(); ++i) src[i] = scale_hint * source.points[i];
    const std::vector<Eigen::Vector3d>& tgt = target.points;

    const double diagonal = target.bounding_diagonal();
    if (!(diagonal > 0.0)) {
        throw DegenerateSourceError("target cloud has zero extent");
    }
    const double radius = kRadiusFraction * diagonal;
    const double inlier_dist = kInlierFraction * diagonal;
    const double inlier_sq = inlier_dist * inlier_dist;

    const KdTree src_tree(src);
    const KdTree tgt_tree(tgt);
    const auto src_normals = estimate_normals(src, src_tree);
    const auto tgt_normals = estimate_normals(tgt, tgt_tree);

    const auto src_keys = stride_subsample(src.size(), kMaxKeypoints);
    const auto tgt_keys = stride_subsample(tgt.size(), kMaxKeypoints);

    std::vector<int> scratch;
    std::vector<Descriptor> src_desc(src_keys.size());
    std::vector<Descriptor> tgt_desc(tgt_keys.size());
    for (size_t i = 0; i < src_keys.size(); ++i) {
        src_desc[i] = compute_descriptor(src, src_normals, src_tree, src_keys[i], radius, scratch);
    }
    for (size_t i = 0; i < tgt_keys.size(); ++i) {
        tgt_desc[i] = compute_descriptor(tgt, tgt_normals, tgt_tree, tgt_keys[i], radius, scratch);
    }

    // Putative correspondences: descriptor nearest neighbor, kept only when
    // the match is mutual. Mutual filtering trades recall for precision,
    // which is what the 3-point consensus needs.
    std::vector<int> fwd(src_keys.size());
    for (size_t i = 0; i < src_keys.size(); ++i) {
        fwd[i] = nearest_descriptor(src_desc[i], tgt_desc);
    }
    std::vector<int> bwd(tgt_keys.size());
    for (size_t j = 0; j < tgt_keys.size(); ++j) {
        bwd[j] = nearest_descriptor(tgt_desc[j], src_desc);
    }
    std::vector<Eigen::Vector3d> corr_src, corr_tgt;
    for (size_t i = 0; i < src_keys.size(); ++i) {
        if (bwd[static_cast<size_t>(fwd[i])] == static_cast<int>(i)) {
            corr_src.push_back(src[static_cast<size_t>(src_keys[i])]);
            corr_tgt.push_back(tgt[static_cast<size_t>(tgt_keys[static_cast<size_t>(fwd[i])])]);
        }
    }
    const size_t n_corr = corr_src.size();

    if (n_corr < 3) {
        throw RegistrationFailedError("only " + std::to_string(n_corr) +
                                      " mutual descriptor matches");
    }

    // Occupancy bitmap of the target cloud, dilated by one cell: a cheap
    // conservative "is there a target point within the inlier band" test
    // used to score hypotheses. Exact counts are recomputed at the end.
    struct OccupancyGrid {
        Eigen::Vector3d origin;
        double cell = 1.0;
        int nx = 1, ny = 1, nz = 1;
        std::vector<char> bits;

        bool test(const Eigen::Vector3d& p) const {
            const int x = static_cast<int>(std::floor((p.x() - origin.x()) / cell));
            const int y = static_cast<int>(std::floor((p.y() - origin.y()) / cell));
            const int z = static_cast<int>(std::floor((p.z() - origin.z()) / cell));
            if (x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz) return false;
            return bits[static_cast<size_t>((z * ny + y) * nx + x)] != 0;
        }
    };
    OccupancyGrid occupancy;
    {
        const auto [lo, hi] = target.bounding_box();
        occupancy.cell = inlier_dist;
        occupancy.origin = lo - Eigen::Vector3d::Constant(2.0 * occupancy.cell);
        const Eigen::Vector3d span = hi - occupancy.origin + Eigen::Vector3d::Constant(2.0 * occupancy.cell);
        occupancy.nx = static_cast<int>(std::ceil(span.x() / occupancy.cell)) + 1;
        occupancy.ny = static_cast<int>(std::ceil(span.y() / occupancy.cell)) + 1;
        occupancy.nz = static_cast<int>(std::ceil(span.z() / occupancy.cell)) + 1;
        occupancy.bits.assign(
            static_cast<size_t>(occupancy.nx) * occupancy.ny * occupancy.nz, 0);
        for (const auto& q : tgt) {
            const int cx = static_cast<int>(std::floor((q.x() - occupancy.origin.x()) / occupancy.cell));
            const int cy = static_cast<int>(std::floor((q.y() - occupancy.origin.y()) / occupancy.cell));
            const int cz = static_cast<int>(std::floor((q.z() - occupancy.origin.z()) / occupancy.cell));
            for (int dz = -1; dz <= 1; ++dz) {
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int x = cx + dx, y = cy + dy, z = cz + dz;
                        if (x < 0 || y < 0 || z < 0 || x >= occupancy.nx || y >= occupancy.ny ||
                            z >= occupancy.nz) {
                            continue;
                        }
                        occupancy.bits[static_cast<size_t>((z * occupancy.ny + y) * occupancy.nx + x)] = 1;
                    }
                }
            }
        }
    }

    // Keypoint positions used for scoring.
    std::vector<Eigen::Vector3d> score_pts;
    score_pts.reserve(src_keys.size());
    for (int i : src_keys) score_pts.push_back(src[static_cast<size_t>(i)]);

    auto grid_score = [&](const SimilarityTransform& t, int bail_below) {
        int hits = 0;
        const int n = static_cast<int>(score_pts.size());
        for (int i = 0; i < n; ++i) {
            if (occupancy.test(t.apply(score_pts[static_cast<size_t>(i)]))) ++hits;
            if (hits + (n - 1 - i) <= bail_below) break;
        }
        return hits;
    };
    // Exact inlier count: keypoints whose transformed position has a target
    // point within the contract threshold.
    auto exact_score = [&](const SimilarityTransform& t) {
        int hits = 0;
        for (const auto& p : score_pts) {
            double sq = 0.0;
            tgt_tree.nearest(t.apply(p), &sq);
            if (sq <= inlier_sq) ++hits;
        }
        return hits;
    };

    // Sample consensus over 3-point rigid hypotheses from the putative
    // matches; triples must be spread out and length-compatible.
    const double min_spread_sq = 0.01 * diagonal * diagonal;
    Prng rng(seed, 0x72616E7361630001ull);
    int best_score = -1;
    SimilarityTransform best;
    bool have_best = false;
    std::vector<Eigen::Vector3d> tri_src(3), tri_tgt(3);
    for (int iter = 0; iter < kRansacIterations; ++iter) {
        const auto a = rng.index(n_corr);
        const auto b = rng.index(n_corr);
        const auto c = rng.index(n_corr);
        if (a == b || b == c || a == c) continue;
        tri_src[0] = corr_src[a];
        tri_src[1] = corr_src[b];
        tri_src[2] = corr_src[c];
        if ((tri_src[1] - tri_src[0]).squaredNorm() < min_spread_sq ||
            (tri_src[2] - tri_src[0]).squaredNorm() < min_spread_sq ||
            (tri_src[2] - tri_src[1]).squaredNorm() < min_spread_sq) {
            continue;
        }
        const double area2 = (tri_src[1] - tri_src[0]).cross(tri_src[2] - tri_src[0]).norm();
        if (area2 < 1e-3 * diagonal * diagonal) continue; // near-collinear
        tri_tgt[0] = corr_tgt[a];
        tri_tgt[1] = corr_tgt[b];
        tri_tgt[2] = corr_tgt[c];
        // Rigid hypotheses cannot stretch: matched triples need consistent
        // pairwise lengths.
        bool compatible = true;
        for (int e = 0; e < 3 && compatible; ++e) {
            const double ls = (tri_src[(e + 1) % 3] - tri_src[e]).norm();
            const double lt = (tri_tgt[(e + 1) % 3] - tri_tgt[e]).norm();
            // Partly relative so a biased scale hint cannot starve the
            // hypothesis pool (the inlier count still judges the result).
            compatible = std::abs(ls - lt) <= std::max(2.0 * inlier_dist, 0.25 * std::max(ls, lt));
        }
        if (!compatible) continue;

        SimilarityTransform hyp;
        try {
            hyp = umeyama_solve(tri_src, tri_tgt, {}, false);
        } catch (const Error&) {
            continue;
        }

        const int score = grid_score(hyp, best_score);
        if (score > best_score) {
            best_score = score;
            best = hyp;
            have_best = true;
        }
    }
    if (!have_best) {
        throw RegistrationFailedError("no valid consensus hypothesis");
    }

    // Polish: rigid nearest-neighbor refits over the keypoints with an
    // annealed gate (2x down to ~0.2x the inlier band), accepted only while
    // the exact inlier count does not drop. The annealing matters: the
    // inlier count is flat within the band, so the raw consensus winner can
    // sit a few degrees off.
    int best_inliers = exact_score(best);
    {
        SimilarityTransform cur = best;
        for (const double gate_frac : {2.0, 1.4, 1.0, 0.7, 0.5, 0.35, 0.25, 0.2}) {
            const double gate = gate_frac * inlier_dist;
            for (int round = 0; round < 5; ++round) {
                std::vector<Eigen::Vector3d> in_src, in_tgt;
                for (const auto& p : score_pts) {
                    const Eigen::Vector3d moved = cur.apply(p);
                    double sq = 0.0;
                    const int j = tgt_tree.nearest(moved, &sq);
                    if (sq <= gate * gate) {
                        in_src.push_back(p);
                        in_tgt.push_back(tgt[static_cast<size_t>(j)]);
                    }
                }
                if (in_src.size() < 3) break;
                SimilarityTransform next = cur;
                try {
                    next = umeyama_solve(in_src, in_tgt, {}, false);
                } catch (const Error&) {
                    break;
                }
                const double moved_by =
                    (next.translation() - cur.translation()).norm() +
                    rotation_angle_between(next.rotation(), cur.rotation()) * diagonal;
                cur = next;
                const int inliers = exact_score(cur);
                if (inliers >= best_inliers) {
                    best_inliers = inliers;
                    best = cur;
                }
                if (moved_by < 1e-5 * diagonal) break; // settled at this gate
            }
        }
    }

    // Sharpness: a real alignment collapses when the pose is shifted by a
    // few inlier bands, while a structureless (noise-like) target scores
    // about the same anywhere. Diagonal shifts are used so boxy shapes
    // cannot slide along their own faces; rotations are deliberately not
    // probed, because rotational flatness means a symmetric source
    // (a genuine ambiguity worth composing anyway), not a failed match.
    {
        std::vector<int> probe_scores;
        const double shift = 8.0 * inlier_dist / std::sqrt(3.0);
        for (int corner = 0; corner < 8; ++corner) {
            const Eigen::Vector3d dt(shift * ((corner & 1) ? 1.0 : -1.0),
                                     shift * ((corner & 2) ? 1.0 : -1.0),
                                     shift * ((corner & 4) ? 1.0 : -1.0));
            probe_scores.push_back(exact_score(
                SimilarityTransform(best.scale(), best.rotation(), best.translation() + dt)));
        }
        std::nth_element(probe_scores.begin(), probe_scores.begin() + probe_scores.size() / 2,
                         probe_scores.end());
        const int median_probe = probe_scores[probe_scores.size() / 2];
        if (best_inliers < 2 * median_probe) {
            throw RegistrationFailedError(
                "consensus not significant: best " + std::to_string(best_inliers) +
                " inliers vs shifted median " + std::to_string(median_probe));
        }
    }

    CoarseRegistrationResult result;
    result.transform =
        SimilarityTransform(scale_hint * best.scale(), best.rotation(), best.translation());
    result.inliers = best_inliers;
    result.inlier_ratio = static_cast<double>(best_inliers) / static_cast<double>(score_pts.size());
    return result;
}

namespace {

CoarseRegistrationResult run_external_registrar(const std::string& command,
                                                const PointCloud& source,
                                                const PointCloud& target, double scale_hint) {
    std::ostringstream in;
    in.precision(17);
    in << source.size() << "\n";
    for (const auto& p : source.points) {
        const Eigen::Vector3d q = scale_hint * p;
        in << q.x() << " " << q.y() << " " << q.z() << "\n";
    }
    in << target.size() << "\n";
    for (const auto& p : target.points) {
        in << p.x() << " " << p.y() << " " << p.z() << "\n";
    }

    std::string out;
    const int rc = run_subprocess(command, in.str(), out);
    if (rc != 0) {
        throw RegistrationFailedError("external registrar exited with code " + std::to_string(rc));
    }

    std::istringstream os(out);
    Eigen::Matrix3d rotation;
    Eigen::Vector3d translation;
    double extra_scale = 1.0;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            if (!(os >> rotation(r, c))) {
                throw RegistrationFailedError("external registrar output truncated");
            }
        }
        if (!(os >> translation[r])) {
            throw RegistrationFailedError("external registrar output truncated");
        }
    }
    if (!(os >> extra_scale)) {
        throw RegistrationFailedError("external registrar output missing scale");
    }

    CoarseRegistrationResult result;
    result.transform = SimilarityTransform(scale_hint * extra_scale, rotation, translation);

    // Measure inliers ourselves so low-confidence detection still works.
    const KdTree tree(target.points);
    const auto keys = stride_subsample(source.size(), kMaxKeypoints);
    const double thresh = kInlierFraction * target.bounding_diagonal();
    int hits = 0;
    for (int i : keys) {
        double sq = 0.0;
        tree.nearest(result.transform.apply(source.points[static_cast<size_t>(i)]), &sq);
        if (sq <= thresh * thresh) ++hits;
    }
    result.inliers = hits;
    result.inlier_ratio = keys.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(keys.size());
    return result;
}

} // namespace

CoarseRegistrationResult run_coarse_registrar(const std::string& name, const PointCloud& source,
                                              const PointCloud& target, double scale_hint,
                                              std::uint64_t seed) {
    if (name.empty() || name == "ppf-ransac") {
        return coarse_global_register(source, target, scale_hint, seed);
    }
    constexpr std::string_view kExternalPrefix = "external:";
    if (name.rfind(kExternalPrefix, 0) == 0) {
        return run_external_registrar(name.substr(kExternalPrefix.size()), source, target,
                                      scale_hint);
    }
    throw RegistrationFailedError("unknown registrar '" + name + "'");
}

} // namespace meshcompose
