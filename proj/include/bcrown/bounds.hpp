#ifndef BCROWN_BOUNDS_HPP
#define BCROWN_BOUNDS_HPP

#include "bcrown/model.hpp"
#include "bcrown/params.hpp"
#include "bcrown/splits.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace bcrown {

class BoundError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/** Which piece of the ReLU relaxation a neuron uses for one objective row. */
enum class ReluCase : std::uint8_t { Active, Inactive, Slope, Upper };

/**
 * Linear lower relaxation of a ReLU layer w.r.t. a coefficient row:
 * coeff^T ReLU(z) >= coeff^T diag(slope) z + coeff^T intercept for l <= z <= u.
 */
struct RelaxCoeffs {
    Vector slope;
    Vector intercept;
    std::vector<ReluCase> cases;
};

struct NeuronRelaxation {
    double slope = 0.0;
    double intercept = 0.0;
    ReluCase kind = ReluCase::Inactive;
};

/// Case table for a single neuron; `alpha` is only read in the Slope case.
NeuronRelaxation relax_neuron(double lower, double upper, SplitStatus status, double coeff, double alpha);

RelaxCoeffs relu_layer_relaxation(const Vector& lower, const Vector& upper, std::span<const SplitStatus> status,
                                  const Vector& coeff, const Vector& alpha);

/** f(x) >= coeffs^T x + constant on the constrained domain. */
struct LinearBound {
    Vector coeffs;
    double constant = 0.0;
};

/**
 * Objective rows over the pre-activation of one linear layer. Each row is an
 * independent linear functional to be lower-bounded.
 */
struct Objective {
    std::size_t layer = 0;
    Matrix rows;

    /// The scalar network output (last linear layer, coefficient 1).
    static Objective output(const Network& net);
};

/** Row-batched version of LinearBound. */
struct BatchBound {
    Matrix coeffs;     // rows x input_dim
    Vector constants;  // rows
};

/**
 * Intermediate quantities of one backward pass, kept for the reverse sweep
 * that computes gradients w.r.t. alpha and beta. Entries are indexed by the
 * hidden layer they belong to.
 */
struct BackwardTrace {
    std::vector<Matrix> coeff;      // coefficient on the post-activation, per hidden layer crossed
    std::vector<Matrix> slope;      // chosen slope per (row, neuron)
    std::vector<Matrix> intercept;  // chosen intercept per (row, neuron)
    std::vector<std::vector<ReluCase>> cases;  // row-major (row * width + neuron)
};

BatchBound backward_bound_batch(const Network& net, const PreActBounds& bounds, const SplitSet& splits,
                                const RelaxParams& params, const Objective& objective,
                                BackwardTrace* trace = nullptr);

/// Single-row backward pass; `objective.rows` must have exactly one row.
LinearBound backward_bound(const Network& net, const PreActBounds& bounds, const SplitSet& splits,
                           const RelaxParams& params, const Objective& objective);

double dual_norm(const Vector& a, double q);

/// Closed-form minimum of coeffs^T x + constant over the input ball.
double concretize(const LinearBound& bound, const InputRegion& region);
Vector concretize_batch(const BatchBound& bound, const InputRegion& region);

/// Minimizer of the linear bound over an l-inf ball; zero coefficients keep the center coordinate.
Vector argmin_input(const LinearBound& bound, const InputRegion& region);

/**
 * Interval-arithmetic bounds on every hidden pre-activation. When `splits` is
 * given, split neurons are clamped to their sign before propagating further.
 */
PreActBounds interval_bounds(const Network& net, const InputRegion& region, const SplitSet* splits = nullptr);

/// Interval-arithmetic lower bound of the scalar output from the last hidden layer's bounds.
double interval_output_lower(const Network& net, const InputRegion& region, const PreActBounds& bounds);

/// Lower bound of every hidden-layer-k neuron (rows of `sign` * identity) under the given bounds below k.
Vector bound_layer_neurons(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                           const SplitSet& splits, const RelaxParams& params, std::size_t layer, double sign);

/**
 * Layer-by-layer bounds: layer k is bounded with the bound propagation using
 * the already computed bounds of layers < k and the layer's own parameter
 * copies from `params`. Results are intersected with interval bounds and the
 * split signs. Stops early (leaving later layers at their interval values)
 * if a layer becomes contradictory.
 */
PreActBounds compute_intermediate_bounds(const Network& net, const InputRegion& region, const SplitSet& splits,
                                         const ParamState& params);

} // namespace bcrown

#endif
