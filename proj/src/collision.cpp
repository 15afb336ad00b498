#include "meshcompose/collision.hpp"

#include "meshcompose/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace meshcompose {

PoseDelta& PoseDelta::operator+=(const PoseDelta& o) {
    log_scale += o.log_scale;
    rotation += o.rotation;
    translation += o.translation;
    return *this;
}

PoseDelta PoseDelta::operator*(double a) const {
    PoseDelta out;
    out.log_scale = log_scale * a;
    out.rotation = rotation * a;
    out.translation = translation * a;
    return out;
}

double PoseDelta::dot(const PoseDelta& o) const {
    return log_scale * o.log_scale + rotation.dot(o.rotation) + translation.dot(o.translation);
}

double PoseDelta::norm() const { return std::sqrt(dot(*this)); }

SimilarityTransform apply_delta(const SimilarityTransform& t, const PoseDelta& d) {
    Eigen::Matrix3d rot_inc = Eigen::Matrix3d::Identity();
    const double angle = d.rotation.norm();
    if (angle > 0.0) {
        rot_inc = Eigen::AngleAxisd(angle, d.rotation / angle).toRotationMatrix();
    }
    return SimilarityTransform(t.scale() * std::exp(d.log_scale), rot_inc * t.rotation(),
                               t.translation() + d.translation);
}

namespace {

// Accumulates d(loss)/d(pose) from d(loss)/d(point) at a transformed point.
// With q = s R p + tau and v = q - tau:
//   d q / d log_scale = v,  d q / d omega = -[v]x,  d q / d tau = I.
void accumulate_point_gradient(const Eigen::Vector3d& v, const Eigen::Vector3d& dl_dq,
                               PoseDelta& grad) {
    grad.log_scale += v.dot(dl_dq);
    grad.rotation += v.cross(dl_dq);
    grad.translation += dl_dq;
}

struct Eq3Terms {
    double align = 0.0;
    double collision = 0.0; // unweighted L_col
    double total = 0.0;     // align + beta * collision
    PoseDelta gradient;
};

// One pass over the points evaluating the alignment term (when targets are
// given) and the collision loss, with optional gradient accumulation.
Eq3Terms evaluate_terms(const PointCloud& points, const std::vector<Eigen::Vector3d>* targets,
                        const DistanceField* field, const SimilarityTransform& t, double epsilon,
                        double lambda, double beta, bool want_gradient) {
    Eq3Terms out;
    for (size_t i = 0; i < points.size(); ++i) {
        const Eigen::Vector3d q = t.apply(points.points[i]);
        const Eigen::Vector3d v = q - t.translation();
        Eigen::Vector3d dl_dq = Eigen::Vector3d::Zero();

        if (targets) {
            const Eigen::Vector3d r = q - (*targets)[i];
            out.align += r.squaredNorm();
            if (want_gradient) dl_dq += 2.0 * r;
        }
        if (field) {
            const FieldSample s = field->sample(q);
            const double hard = std::max(-s.value, 0.0);
            const double soft = std::max(epsilon - s.value, 0.0);
            out.collision += hard * hard + lambda * soft;
            if (want_gradient) {
                // Strict hinges: the subgradient at the kinks is zero.
                double dphi = 0.0;
                if (s.value < 0.0) dphi -= 2.0 * hard;
                if (s.value < epsilon) dphi -= lambda;
                dl_dq += beta * dphi * s.gradient;
            }
        }
        if (want_gradient && !dl_dq.isZero()) {
            accumulate_point_gradient(v, dl_dq, out.gradient);
        }
    }
    out.total = out.align + beta * out.collision;
    return out;
}

void validate_collision_params(const CollisionParams& p) {
    if (p.epsilon < 0.0) throw OutOfRangeError("epsilon must be >= 0");
    if (p.lambda < 0.0) throw OutOfRangeError("lambda must be >= 0");
    if (p.beta_max < 0.0) throw OutOfRangeError("beta_max must be >= 0");
    if (p.k_max < 1) throw OutOfRangeError("k_max must be >= 1");
    if (p.inner_steps < 0) throw OutOfRangeError("inner_steps must be >= 0");
}

} // namespace

std::pair<double, PoseDelta> collision_loss(const DistanceField& field, const PointCloud& points,
                                            const SimilarityTransform& t, double epsilon,
                                            double lambda) {
    if (points.points.empty()) {
        throw InsufficientPointsError("collision_loss over an empty cloud");
    }
    // beta = 1 so the gradient is that of the bare loss.
    const Eq3Terms terms = evaluate_terms(points, nullptr, &field, t, epsilon, lambda, 1.0, true);
    return {terms.collision, terms.gradient};
}

std::pair<double, PoseDelta> collision_loss(const SdfGrid& grid, const PointCloud& points,
                                            const SimilarityTransform& t, double epsilon,
                                            double lambda) {
    const GridField field(grid);
    return collision_loss(field, points, t, epsilon, lambda);
}

double beta_schedule(int k, int k_max, double beta_max) {
    if (k_max < 1) throw OutOfRangeError("k_max must be >= 1");
    if (k < 0 || k > k_max) {
        throw OutOfRangeError("stage index " + std::to_string(k) + " outside [0, " +
                              std::to_string(k_max) + "]");
    }
    return beta_max * static_cast<double>(k) / static_cast<double>(k_max);
}

std::pair<double, PoseDelta> composition_objective(const PointCloud& points,
                                                   const std::vector<Eigen::Vector3d>& fixed_targets,
                                                   const DistanceField& field,
                                                   const SimilarityTransform& t,
                                                   const CollisionParams& params, double beta) {
    if (points.size() != fixed_targets.size()) {
        throw LengthMismatchError("points and fixed_targets differ in length");
    }
    const Eq3Terms terms = evaluate_terms(points, &fixed_targets, &field, t, params.epsilon,
                                          params.lambda, beta, true);
    return {terms.total, terms.gradient};
}

OptimizationTrace optimize_placement(const PointCloud& remain_points,
                                     const PointCloud& guidance_points,
                                     const DistanceField& field, const SimilarityTransform& init,
                                     const CollisionParams& params, const IcpParams& icp_params) {
    if (remain_points.points.empty() || guidance_points.points.empty()) {
        throw InsufficientPointsError("optimize_placement over an empty cloud");
    }
    validate_collision_params(params);

    OptimizationTrace trace;
    SimilarityTransform pose = init;

    const double guidance_diag = guidance_points.bounding_diagonal();
    const double max_step = std::max(1.0, 0.5 * guidance_diag);

    double prev_total = std::numeric_limits<double>::infinity();
    int stall_streak = 0;

    PointCloud stage_points;
    std::vector<Eigen::Vector3d> stage_targets;
    for (int k = 0; k < params.k_max; ++k) {
        const double beta = beta_schedule(k, params.k_max, params.beta_max);

        // Fix correspondences p' at the current pose for this whole stage.
        const Correspondences corr =
            find_correspondences(transform_cloud(remain_points, pose), guidance_points, icp_params);
        stage_points.points.clear();
        stage_targets.clear();
        for (const auto& pair : corr.pairs) {
            stage_points.points.push_back(remain_points.points[pair.source]);
            stage_targets.push_back(guidance_points.points[pair.target]);
        }

        Eq3Terms current = evaluate_terms(stage_points, &stage_targets, &field, pose,
                                          params.epsilon, params.lambda, beta, true);
        // The step budget restarts every stage: the annealed weights change
        // the landscape, so a step that stalled at stage k can be exactly
        // what stage k+1 needs.
        double step_memory = params.initial_step;
        for (int step = 0; step < params.inner_steps; ++step) {
            if (!std::isfinite(current.total)) {
                throw DivergedError("objective became non-finite at stage " + std::to_string(k));
            }
            const double grad_norm = current.gradient.norm();
            if (grad_norm == 0.0) break;
            const PoseDelta direction = current.gradient * (-1.0 / grad_norm);
            const double slope = current.gradient.dot(direction); // = -grad_norm

            // Backtracking line search, Armijo c = 1e-4, at most 20 halvings.
            double alpha = std::min(step_memory, max_step);
            bool accepted = false;
            for (int halving = 0; halving <= 20; ++halving) {
                const SimilarityTransform trial = apply_delta(pose, direction * alpha);
                const Eq3Terms trial_terms = evaluate_terms(
                    stage_points, &stage_targets, &field, trial, params.epsilon, params.lambda,
                    beta, false);
                if (trial_terms.total <= current.total + 1e-4 * alpha * slope) {
                    pose = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) {
                break; // stuck at this resolution; move on to the next stage
            }
            step_memory = std::min(2.0 * alpha, max_step);
            current = evaluate_terms(stage_points, &stage_targets, &field, pose, params.epsilon,
                                     params.lambda, beta, true);
        }

        if (!std::isfinite(current.total)) {
            throw DivergedError("objective became non-finite at stage " + std::to_string(k));
        }

        // Penetration is reported over the full cloud, not just the
        // retained correspondences.
        double max_pen = 0.0;
        for (const auto& p : remain_points.points) {
            max_pen = std::max(max_pen, -field.sample(pose.apply(p)).value);
        }
        max_pen = std::max(max_pen, 0.0);

        StageRecord record;
        record.k = k;
        record.beta = beta;
        record.align_term = current.align;
        record.collision_term = current.collision;
        record.total = current.total;
        record.max_penetration = max_pen;
        trace.stages.push_back(record);

        const double rel = std::abs(current.total - prev_total) / std::max(prev_total, 1e-30);
        stall_streak = rel < params.objective_tol ? stall_streak + 1 : 0;
        prev_total = current.total;
        if (stall_streak >= 5 && max_pen < params.epsilon) {
            trace.converged = true;
            break;
        }
    }

    trace.final_transform = pose;
    return trace;
}

OptimizationTrace optimize_placement(const PointCloud& remain_points,
                                     const PointCloud& guidance_points, const SdfGrid& grid,
                                     const SimilarityTransform& init, const CollisionParams& params,
                                     const IcpParams& icp_params) {
    const GridField field(grid);
    return optimize_placement(remain_points, guidance_points, field, init, params, icp_params);
}

std::string trace_to_csv(const OptimizationTrace& trace) {
    std::ostringstream out;
    out.precision(17);
    out << "k,beta,align_term,col_term,total,max_penetration\n";
    for (const auto& s : trace.stages) {
        out << s.k << "," << s.beta << "," << s.align_term << "," << s.collision_term << ","
            << s.total << "," << s.max_penetration << "\n";
    }
    return out.str();
}

} // namespace meshcompose
