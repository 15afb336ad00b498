#include "meshcompose/rng.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace meshcompose {

namespace {
constexpr std::uint64_t kNormalStream = 0x6E6F726D616C0001ull;
constexpr std::uint64_t kRotationStream = 0x726F746174650001ull;
constexpr std::uint64_t kBoxStream = 0x626F780000000001ull;
constexpr double kTwoPi = 6.283185307179586476925286766559;
} // namespace

double rand_normal(std::uint64_t seed, std::uint64_t counter) {
    const std::uint64_t s = derive_seed(seed, kNormalStream);
    // Box-Muller; clamp u1 away from 0 so log() stays finite.
    const double u1 = std::max(rand_uniform(s, 2 * counter), 0x1.0p-53);
    const double u2 = rand_uniform(s, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

Eigen::Matrix3d rand_rotation(std::uint64_t seed, std::uint64_t counter) {
    const std::uint64_t s = derive_seed(seed, kRotationStream);
    // Shoemake: uniform unit quaternion from three uniforms.
    const double u1 = rand_uniform(s, 3 * counter);
    const double u2 = rand_uniform(s, 3 * counter + 1);
    const double u3 = rand_uniform(s, 3 * counter + 2);
    const double a = std::sqrt(1.0 - u1);
    const double b = std::sqrt(u1);
    Eigen::Quaterniond q(a * std::sin(kTwoPi * u2), a * std::cos(kTwoPi * u2),
                         b * std::sin(kTwoPi * u3), b * std::cos(kTwoPi * u3));
    q.normalize();
    return q.toRotationMatrix();
}

Eigen::Vector3d rand_in_box(std::uint64_t seed, std::uint64_t counter, const Eigen::Vector3d& lo,
                            const Eigen::Vector3d& hi) {
    const std::uint64_t s = derive_seed(seed, kBoxStream);
    Eigen::Vector3d p;
    for (int i = 0; i < 3; ++i) {
        p[i] = lo[i] + (hi[i] - lo[i]) * rand_uniform(s, 3 * counter + static_cast<std::uint64_t>(i));
    }
    return p;
}

Eigen::Vector3d Prng::unit_vector() {
    // Marsaglia via normals; normalizing three gaussians is uniform on S2.
    Eigen::Vector3d v(normal(), normal(), normal());
    while (v.norm() < 1e-12) {
        v = Eigen::Vector3d(normal(), normal(), normal());
    }
    return v.normalized();
}

} // namespace meshcompose
