#ifndef BCROWN_ORACLE_HPP
#define BCROWN_ORACLE_HPP

#include "bcrown/bounds.hpp"
#include "bcrown/simplex.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace bcrown {

/** Raised when the enumeration oracle is asked for an instance beyond its guard. */
class OracleGuardError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kMaxOracleUnstable = 20;

struct PatternResult {
    std::vector<std::int8_t> pattern;  // +1 active / -1 inactive per branched neuron, DFS order
    bool feasible = false;
    double min_value = 0.0;
    Vector argmin;
};

struct ExactResult {
    bool empty = true;  // no input satisfies the split constraints
    double min_value = 0.0;
    Vector argmin;
    std::size_t patterns = 0;  // leaf patterns solved
};

/**
 * Exact minimum of the scalar network over the l-inf ball restricted by
 * `splits`, by enumerating activation patterns of the neurons whose sign is
 * not fixed and solving one LP per pattern. `leaves`, when given, receives
 * every enumerated leaf pattern.
 */
ExactResult exact_min(const Network& net, const InputRegion& region, const SplitSet& splits,
                      std::vector<PatternResult>* leaves = nullptr);

/// Triangle-relaxation LP (with split constraints) over variables [x | z_0 | zhat_0 | z_1 | ...].
LPProblem build_relaxation_lp(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                              const SplitSet& splits, double* objective_offset = nullptr);

struct LPBoundResult {
    bool infeasible = false;
    double value = 0.0;
};

/// Optimal value of the triangle-relaxation LP for fixed intermediate bounds and splits.
LPBoundResult lp_relaxation_min(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                                const SplitSet& splits);

struct AttackResult {
    double value = 0.0;
    Vector witness;
};

/// Input gradient of the scalar network (ReLU derivative taken as 0 at 0).
Vector input_gradient(const Network& net, const Vector& x);

/**
 * Sign-gradient PGD on the network output with step epsilon/10. Restart 0
 * starts at the center; the others start uniformly inside the ball.
 */
AttackResult pgd_attack(const Network& net, const InputRegion& region, int steps, int restarts,
                        std::uint64_t seed = 0);

} // namespace bcrown

#endif
