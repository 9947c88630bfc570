#ifndef BCROWN_BAB_HPP
#define BCROWN_BAB_HPP

#include "bcrown/bounds.hpp"
#include "bcrown/optimizer.hpp"
#include "bcrown/params.hpp"
#include "bcrown/splits.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace bcrown {

/** One subproblem of the branch and bound tree. */
struct Domain {
    SplitSet splits;
    double lower = -kInfNorm;  // certified lower bound on f over the subdomain
    double upper = kInfNorm;   // f at `witness`, a point of the input region
    Vector witness;
    ParamState params;
    PreActBounds bounds;
    int depth = 0;
    bool infeasible = false;  // the split constraints admit no input
};

enum class VerdictStatus { Verified, Falsified, Unknown };

const char* to_string(VerdictStatus s);

struct BabStats {
    std::uint64_t domains_visited = 0;  // domains whose bound was computed, root included
    std::uint64_t branches = 0;         // domains split
    std::uint64_t iterations = 0;
    std::uint64_t leaf_lps = 0;         // fully split domains settled by an exact LP
    double wall_seconds = 0.0;
};

struct Verdict {
    VerdictStatus status = VerdictStatus::Unknown;
    double global_lower = -kInfNorm;
    double global_upper = kInfNorm;
    std::optional<Vector> counterexample;
    double root_lower = -kInfNorm;
    BabStats stats;
};

enum class Branching { Babsr, Fsb };

struct NeuronScore {
    NeuronId neuron;
    double score = 0.0;
};

/**
 * Split scores of the unstable Free neurons of `domain`, computed from a
 * beta = 0 backward pass with the domain's current alpha. Sorted by
 * decreasing score, ties in (layer, index) order. Empty when fully split.
 */
std::vector<NeuronScore> babsr_score(const Network& net, const Domain& domain);

/// Top-scoring neuron, or nullopt when the domain is fully split.
std::optional<NeuronId> babsr_choice(const Network& net, const Domain& domain);

/**
 * Filtered strong branching: among the top-k candidates, pick the one whose
 * worse child has the best cheap bound (beta = 0, current alpha, one backward
 * pass per child). Ties go to the better-scored candidate.
 */
std::optional<NeuronId> fsb_branching(const Network& net, const InputRegion& region, const Domain& domain, int k);

/**
 * Two children per domain (Pos first, then Neg), in input order. Children
 * inherit parameter values with the new beta entry at 0 and fresh moments.
 * Throws BoundError if a chosen neuron is already split.
 */
std::vector<Domain> batch_split(const std::vector<Domain>& domains, const std::vector<NeuronId>& choices);

/**
 * Keeps the children that are neither verified (lower >= 0) nor beaten by a
 * known point (lower > global_upper). `parent_lower[i]` belongs to the
 * parent of `children[i]`; survivors get lower := max(lower, parent_lower).
 */
std::vector<Domain> domain_filter(std::vector<Domain> children, const std::vector<double>& parent_lower,
                                  double global_upper);

struct BabProgress {
    double wall_seconds = 0.0;
    std::uint64_t domains_live = 0;
    std::uint64_t domains_visited = 0;
    double global_lower = 0.0;
    double global_upper = 0.0;
};

struct BabConfig {
    int batch = 8;
    double delta = 1e-6;
    std::uint64_t max_domains = 1'000'000;
    double timeout_seconds = kInfNorm;  // 0 stops after the root bound
    Branching branching = Branching::Babsr;
    int fsb_candidates = 3;

    JointConfig root;      // root bound: intermediate refinement + output ascent
    AscentConfig child;    // per-child output ascent
    bool recompute_intermediate = false;

    /// Keep tightening the lower bound after a counterexample is found.
    bool stop_on_falsified = true;

    int pgd_steps = 0;  // 0 disables the root attack
    int pgd_restarts = 0;
    std::uint64_t seed = 0;

    int threads = 1;
    std::function<void(const BabProgress&)> on_progress;
};

/// Branch and bound on a scalar-output network; the property is f(x) > 0 on the region.
Verdict run_bab(const Network& net, const InputRegion& region, const BabConfig& config);

} // namespace bcrown

#endif
