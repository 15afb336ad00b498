#pragma once

#include "meshcompose/mesh.hpp"
#include "meshcompose/registration.hpp"
#include "meshcompose/sdf.hpp"
#include "meshcompose/transform.hpp"

#include <string>
#include <vector>

namespace meshcompose {

struct CollisionParams {
    double epsilon = 0.0;      // safety margin; pipeline defaults it to 0.005 * anchor diagonal
    double lambda = 0.003;     // soft-repulsion weight
    double beta_max = 3.0;
    int k_max = 100;           // outer annealing stages
    int inner_steps = 10;      // gradient steps per stage
    double initial_step = 1e-2;
    double objective_tol = 1e-12; // relative change for the stall test
};

// Local pose increment at a transform t: the perturbed pose is
// (s * exp(log_scale), exp([rotation]x) * R, tau + translation).
// Doubles as the gradient coordinate system.
struct PoseDelta {
    double log_scale = 0.0;
    Eigen::Vector3d rotation = Eigen::Vector3d::Zero();    // axis-angle, radians
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    PoseDelta& operator+=(const PoseDelta& o);
    PoseDelta operator*(double a) const;
    double dot(const PoseDelta& o) const;
    double norm() const;
};

SimilarityTransform apply_delta(const SimilarityTransform& t, const PoseDelta& d);

struct StageRecord {
    int k = 0;
    double beta = 0.0;
    double align_term = 0.0;
    double collision_term = 0.0;
    double total = 0.0;
    double max_penetration = 0.0;
};

struct OptimizationTrace {
    std::vector<StageRecord> stages;
    SimilarityTransform final_transform;
    bool converged = false;
};

// Collision loss of the transformed points against the field:
//   sum_p ( [-phi(t(p))]+^2 + lambda * [eps - phi(t(p))]+ ),
// with the zero subgradient at both hinge kinks. The gradient is returned
// in PoseDelta coordinates at t.
std::pair<double, PoseDelta> collision_loss(const DistanceField& field,
                                            const PointCloud& points,
                                            const SimilarityTransform& t,
                                            double epsilon, double lambda);
std::pair<double, PoseDelta> collision_loss(const SdfGrid& grid, const PointCloud& points,
                                            const SimilarityTransform& t, double epsilon,
                                            double lambda);

// Linear annealing weight: beta_max * k / k_max for 0 <= k <= k_max.
// Throws OutOfRangeError outside that range.
double beta_schedule(int k, int k_max, double beta_max);

// Combined objective: sum_p |t(p) - p'|^2 + beta * collision_loss(t).
// Throws LengthMismatchError if points and fixed_targets differ in length.
std::pair<double, PoseDelta> composition_objective(const PointCloud& points,
                                                   const std::vector<Eigen::Vector3d>& fixed_targets,
                                                   const DistanceField& field,
                                                   const SimilarityTransform& t,
                                                   const CollisionParams& params, double beta);

// Annealed placement optimizer. For each stage k in [0, k_max):
// set beta from the schedule, fix correspondences p' at the current pose,
// then run inner_steps of backtracking gradient descent (Armijo c = 1e-4,
// at most 20 halvings) on the combined objective. Stops early only after
// the relative objective change stays below objective_tol for 5
// consecutive stages while the max penetration depth is below epsilon.
// Throws DivergedError if the objective becomes non-finite and propagates
// NoCorrespondencesError from the correspondence stage.
OptimizationTrace optimize_placement(const PointCloud& remain_points,
                                     const PointCloud& guidance_points,
                                     const DistanceField& field,
                                     const SimilarityTransform& init,
                                     const CollisionParams& params,
                                     const IcpParams& icp_params);
OptimizationTrace optimize_placement(const PointCloud& remain_points,
                                     const PointCloud& guidance_points, const SdfGrid& grid,
                                     const SimilarityTransform& init,
                                     const CollisionParams& params,
                                     const IcpParams& icp_params);

// CSV export of the per-stage trace: k,beta,align_term,col_term,total,max_penetration.
std::string trace_to_csv(const OptimizationTrace& trace);

} // namespace meshcompose
