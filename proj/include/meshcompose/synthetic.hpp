#pragma once

#include "meshcompose/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace meshcompose {

enum class SyntheticKind { Clean, Holes, Occluded, Colliding };

SyntheticKind synthetic_kind_from_string(const std::string& s);
std::string to_string(SyntheticKind kind);

struct SyntheticCase {
    SceneSpec spec;                                  // also written to <dir>/scene.json
    std::vector<SimilarityTransform> ground_truth;   // per object, asset -> guidance frame
    std::string directory;
};

// Desk-scale benchmark scenes: assets are constellations of disjoint
// primitives (box / icosphere / cylinder), guidance meshes are the assets
// under random similarity transforms (s in [0.5, 2], random rotation,
// translation up to one asset diagonal), degraded per kind:
//   clean     - no degradation
//   holes     - 25% of guidance faces deleted at random
//   occluded  - only the 40% of faces on one side of a random plane kept
//   colliding - ground-truth poses constructed so the pair overlaps with
//               r_volume ~= 0.30 (measured by the metrics module)
// Everything (meshes, scene.json, ground_truth.json) is written under
// `dir` and is bit-identical for identical (kind, seed, n_objects).
SyntheticCase generate_synthetic_case(SyntheticKind kind, std::uint64_t seed,
                                      const std::string& dir, int n_objects = 2);

// Reads the ground-truth transforms written next to a generated scene.
std::vector<SimilarityTransform> load_ground_truth(const std::string& path);

} // namespace meshcompose
