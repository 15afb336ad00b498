#include "meshcompose/transform.hpp"

#include "meshcompose/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace meshcompose {

namespace {
constexpr double kOrthoTol = 1e-9;
}

SimilarityTransform::SimilarityTransform() = default;

SimilarityTransform::SimilarityTransform(double scale, const Eigen::Matrix3d& rotation,
                                         const Eigen::Vector3d& translation)
    : scale_(scale), translation_(translation) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw DegenerateConfigurationError("similarity scale must be positive and finite");
    }
    const Eigen::Matrix3d gram = rotation.transpose() * rotation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kOrthoTol) {
        throw DegenerateConfigurationError("rotation is not orthonormal within 1e-9");
    }
    if (std::abs(rotation.determinant() - 1.0) > kOrthoTol) {
        throw DegenerateConfigurationError("rotation determinant is not +1 within 1e-9");
    }
    // Renormalize through a unit quaternion so numerical drift cannot
    // accumulate across repeated composition.
    Eigen::Quaterniond q(rotation);
    q.normalize();
    rotation_ = q.toRotationMatrix();
    if (!translation_.allFinite()) {
        throw DegenerateConfigurationError("translation has non-finite components");
    }
}

SimilarityTransform SimilarityTransform::compose(const SimilarityTransform& other) const {
    return SimilarityTransform(scale_ * other.scale_, rotation_ * other.rotation_,
                               scale_ * (rotation_ * other.translation_) + translation_);
}

SimilarityTransform SimilarityTransform::inverse() const {
    const Eigen::Matrix3d rt = rotation_.transpose();
    return SimilarityTransform(1.0 / scale_, rt, -(rt * translation_) / scale_);
}

double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    // Quaternion + atan2 keeps full precision for tiny angles, where the
    // trace/acos form bottoms out near 1e-8.
    const Eigen::Quaterniond qa(a);
    const Eigen::Quaterniond qb(b);
    const Eigen::Quaterniond d = qa.conjugate() * qb;
    return 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
}

} // namespace meshcompose
