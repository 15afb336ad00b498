#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace meshcompose {

// Counter-based randomness. Every draw is a pure function of
// (seed, stream, counter), so parallel consumers can index into the same
// deterministic sequence without sharing state, and results are identical
// across platforms and thread counts.
//
// The generator is SplitMix64 (Steele, Lea & Flood, "Fast splittable
// pseudorandom number generators", OOPSLA 2014) applied to a mixed key.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Derives a child seed; used to give each subsystem its own stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ull));
}

inline std::uint64_t rand_bits(std::uint64_t seed, std::uint64_t counter) {
    return splitmix64(splitmix64(seed) + counter * 0x9E3779B97F4A7C15ull);
}

// Uniform double in [0, 1) with 53 random mantissa bits.
inline double rand_uniform(std::uint64_t seed, std::uint64_t counter) {
    return static_cast<double>(rand_bits(seed, counter) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; consumes counters 2c and 2c+1 of a
// dedicated sub-stream so it never collides with rand_uniform draws.
double rand_normal(std::uint64_t seed, std::uint64_t counter);

// Uniform random rotation (Shoemake's subgroup algorithm), consuming three
// uniforms from counters 3c, 3c+1, 3c+2 of a dedicated sub-stream.
Eigen::Matrix3d rand_rotation(std::uint64_t seed, std::uint64_t counter);

// Uniform point in an axis-aligned box, consuming counters 3c..3c+2.
Eigen::Vector3d rand_in_box(std::uint64_t seed, std::uint64_t counter,
                            const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

// Stateful convenience wrapper for inherently sequential consumers
// (RANSAC draws, the synthetic-case generator). Internally still
// counter-based: next() just advances the counter.
class Prng {
public:
    explicit Prng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(derive_seed(seed, stream)) {}

    std::uint64_t bits() { return rand_bits(seed_, counter_++); }
    double uniform() { return rand_uniform(seed_, counter_++); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t index(std::uint64_t n) { return bits() % n; }
    double normal() { return rand_normal(seed_, counter_++); }
    Eigen::Matrix3d rotation() { return rand_rotation(seed_, counter_++); }
    Eigen::Vector3d unit_vector();

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

} // namespace meshcompose
