#ifndef BCROWN_PARAMS_HPP
#define BCROWN_PARAMS_HPP

#include "bcrown/model.hpp"

#include <vector>

namespace bcrown {

/**
 * Relaxation slopes (alpha) and split multipliers (beta), one vector per
 * hidden layer that a backward pass crosses.
 */
struct RelaxParams {
    std::vector<Vector> alpha;
    std::vector<Vector> beta;

    /// alpha = 1, beta = 0 on hidden layers [0, num_layers).
    static RelaxParams initial(const Network& net, std::size_t num_layers);

    std::size_t num_layers() const { return alpha.size(); }
};

/** A parameter set together with its adaptive-moment buffers. */
struct ParamGroup {
    RelaxParams values;
    RelaxParams first_moment;
    RelaxParams second_moment;
    int step = 0;

    static ParamGroup initial(const Network& net, std::size_t num_layers);
    void reset_moments();
};

/**
 * All optimizable variables of one domain: the set used for the output
 * objective plus independent copies for bounding each hidden layer from
 * below and above. inter_lower[k] / inter_upper[k] cover hidden layers < k
 * and are shared by all neurons of layer k; entry 0 is empty since the first
 * hidden layer is bounded exactly without crossing a ReLU.
 */
struct ParamState {
    ParamGroup output;
    std::vector<ParamGroup> inter_lower;
    std::vector<ParamGroup> inter_upper;

    static ParamState initial(const Network& net);
    void reset_moments();
};

} // namespace bcrown

#endif
