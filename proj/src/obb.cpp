#include "meshcompose/obb.hpp"

#include "meshcompose/errors.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <limits>

namespace meshcompose {

namespace {

// Largest-magnitude component positive; earliest component wins ties.
Eigen::Vector3d canonical_sign(const Eigen::Vector3d& axis) {
    int arg = 0;
    double best = std::abs(axis[0]);
    for (int i = 1; i < 3; ++i) {
        if (std::abs(axis[i]) > best) {
            best = std::abs(axis[i]);
            arg = i;
        }
    }
    return axis[arg] < 0.0 ? Eigen::Vector3d(-axis) : axis;
}

void projection_ranges(const PointCloud& points, const Eigen::Matrix3d& axes,
                       std::array<double, 3>& lo, std::array<double, 3>& hi) {
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& p : points.points) {
        for (int a = 0; a < 3; ++a) {
            const double proj = axes.col(a).dot(p);
            lo[a] = std::min(lo[a], proj);
            hi[a] = std::max(hi[a], proj);
        }
    }
}

} // namespace

Obb compute_obb(const PointCloud& points) {
    if (points.points.empty()) {
        throw InsufficientPointsError("compute_obb requires at least one point");
    }
    const auto n = static_cast<double>(points.points.size());

    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& p : points.points) mean += p;
    mean /= n;

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : points.points) {
        const Eigen::Vector3d d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;

    Eigen::Matrix3d pca = Eigen::Matrix3d::Identity();
    if (cov.cwiseAbs().maxCoeff() > 1e-30) {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        pca = eig.eigenvectors();
    }

    // Order axes by descending projection half-range.
    std::array<double, 3> lo{}, hi{};
    projection_ranges(points, pca, lo, hi);
    std::array<int, 3> order = {0, 1, 2};
    std::array<double, 3> extent = {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return extent[a] > extent[b]; });

    Obb obb;
    obb.axes.col(0) = canonical_sign(pca.col(order[0]));
    obb.axes.col(1) = canonical_sign(pca.col(order[1]));
    // Right-handed frame: the last axis follows from the first two.
    obb.axes.col(2) = obb.axes.col(0).cross(obb.axes.col(1));

    projection_ranges(points, obb.axes, lo, hi);
    Eigen::Vector3d center_local;
    for (int a = 0; a < 3; ++a) {
        obb.half_extents[a] = 0.5 * (hi[a] - lo[a]);
        center_local[a] = 0.5 * (hi[a] + lo[a]);
    }
    obb.center = obb.axes * center_local;
    return obb;
}

double estimate_scale_from_obb(const Obb& source, const Obb& target) {
    double log_sum = 0.0;
    int valid = 0;
    for (int i = 0; i < 3; ++i) {
        if (source.half_extents[i] > 1e-12) {
            log_sum += std::log(target.half_extents[i] / source.half_extents[i]);
            ++valid;
        }
    }
    if (valid == 0) {
        throw DegenerateSourceError("all source OBB extents are degenerate");
    }
    const double s = std::exp(log_sum / valid);
    if (!(s > 0.0) || !std::isfinite(s)) {
        throw DegenerateSourceError("OBB scale estimate is not a positive finite number");
    }
    return s;
}

} // namespace meshcompose
