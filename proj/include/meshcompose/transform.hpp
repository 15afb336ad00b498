#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace meshcompose {

// Similarity transform acting on points as p -> scale * rotation * p + translation.
// The composition order is fixed; all solvers and losses rely on it.
class SimilarityTransform {
public:
    SimilarityTransform(); // identity

    // Validates scale > 0 and that rotation is a proper rotation
    // (orthonormal within 1e-9, det within 1e-9 of +1), then renormalizes
    // through a unit quaternion so repeated composition cannot drift.
    SimilarityTransform(double scale, const Eigen::Matrix3d& rotation,
                        const Eigen::Vector3d& translation);

    static SimilarityTransform identity() { return SimilarityTransform(); }

    double scale() const { return scale_; }
    const Eigen::Matrix3d& rotation() const { return rotation_; }
    const Eigen::Vector3d& translation() const { return translation_; }
    Eigen::Quaterniond rotation_quat() const { return Eigen::Quaterniond(rotation_); }

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
        return scale_ * (rotation_ * p) + translation_;
    }

    // this ∘ other: (this * other)(p) == this(other(p)).
    SimilarityTransform compose(const SimilarityTransform& other) const;

    SimilarityTransform inverse() const;

private:
    double scale_ = 1.0;
    Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

inline Eigen::Vector3d apply_transform(const SimilarityTransform& t, const Eigen::Vector3d& p) {
    return t.apply(p);
}

// Geodesic angle (radians) between two rotations; error metric for tests
// and benchmarks.
double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

} // namespace meshcompose
