#ifndef BCROWN_OPTIMIZER_HPP
#define BCROWN_OPTIMIZER_HPP

#include "bcrown/bounds.hpp"
#include "bcrown/params.hpp"

namespace bcrown {

enum class LineSearchMode { Auto, Off, On };

struct AscentConfig {
    int iters = 20;
    double lr_alpha = 0.1;
    double lr_beta = 0.05;
    double decay = 0.98;

    double moment_decay1 = 0.9;
    double moment_decay2 = 0.999;
    double moment_eps = 1e-8;

    /// Auto: backtracking line search only when no unstable Free neuron is crossed.
    LineSearchMode line_search = LineSearchMode::Auto;
    int max_halvings = 30;

    /// In the fully split l-inf case, finish with an exact LP maximization of the (concave) bound.
    bool exact_polish = true;
};

/** Gradient of the weighted sum of concretized row bounds w.r.t. alpha and beta. */
struct BoundGradient {
    RelaxParams grad;
    Vector values;  // concretized bound per objective row
};

BoundGradient bound_gradient(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                             const SplitSet& splits, const RelaxParams& params, const Objective& objective,
                             const Vector& row_weights);

/// Gradient of the output-objective bound.
BoundGradient gradient(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                       const SplitSet& splits, const RelaxParams& params);

/// Clamp alpha to [0, 1], beta to [0, inf), and zero beta on Free neurons.
void project(RelaxParams& params, const SplitSet& splits);

/// True when the backward pass for `objective_layer` crosses no unstable Free neuron.
bool fully_split(const PreActBounds& bounds, const SplitSet& splits, std::size_t objective_layer);

struct RowAscentResult {
    Vector best;        // best-so-far bound per row
    int iterations = 0;
    int line_search_steps = 0;
    bool aborted = false;
};

/**
 * Projected ascent on the sum of row bounds of `objective`. Rows keep their
 * own best-so-far value; `group.values` ends at the iterate with the best sum.
 */
RowAscentResult ascend_rows(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                            const SplitSet& splits, const Objective& objective, ParamGroup& group,
                            const AscentConfig& config);

struct AscentResult {
    double best = 0.0;
    LinearBound linear;  // linear bound at the best iterate
    int iterations = 0;
    bool aborted = false;
    bool used_line_search = false;
    bool polished = false;   // the exact maximization beat the ascent iterates
    bool unbounded = false;  // the bound grows without limit: the split constraints admit no input
};

/// Maximizes the output bound over (alpha, beta) for fixed intermediate bounds.
AscentResult ascend(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                    const SplitSet& splits, ParamGroup& group, const AscentConfig& config);

struct JointConfig {
    AscentConfig ascent;
    int rounds = 1;  // intermediate-bound refinement rounds
};

struct JointResult {
    double bound = 0.0;
    PreActBounds bounds;
    LinearBound linear;
    bool infeasible = false;  // some layer's bounds became contradictory
};

/**
 * Alternates layer-by-layer refinement of intermediate bounds (each layer
 * ascending its own parameter copies) with ascent of the output bound.
 * Intermediate bounds only tighten across rounds.
 */
JointResult joint_optimize(const Network& net, const InputRegion& region, const SplitSet& splits,
                           ParamState& state, const JointConfig& config);

} // namespace bcrown

#endif
