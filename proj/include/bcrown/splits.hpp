#ifndef BCROWN_SPLITS_HPP
#define BCROWN_SPLITS_HPP

#include "bcrown/model.hpp"

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

namespace bcrown {

/** Branching decision on one hidden neuron. Pos: z >= 0, Neg: z < 0. */
enum class SplitStatus : std::uint8_t { Free, Pos, Neg };

/** Hidden neuron address; layer is the 0-based hidden layer. */
struct NeuronId {
    int layer = 0;
    int index = 0;

    auto operator<=>(const NeuronId&) const = default;
};

class SplitSet {
public:
    SplitSet() = default;
    /// All hidden neurons of `net` start Free.
    explicit SplitSet(const Network& net);

    std::size_t num_layers() const { return status_.size(); }
    int width(std::size_t layer) const { return static_cast<int>(status_[layer].size()); }

    SplitStatus get(NeuronId n) const { return status_[n.layer][n.index]; }
    void set(NeuronId n, SplitStatus s) { status_[n.layer][n.index] = s; }
    std::span<const SplitStatus> layer(std::size_t h) const { return status_[h]; }

    /// Diagonal entry of the sign matrix: -1 for Pos, +1 for Neg, 0 for Free.
    double sign(int layer, int index) const;

    /// Number of split (non-Free) neurons.
    int count() const;

    bool operator==(const SplitSet&) const = default;

private:
    std::vector<std::vector<SplitStatus>> status_;
};

/** Per-hidden-layer bounds on pre-activations. */
struct PreActBounds {
    std::vector<Vector> lower;
    std::vector<Vector> upper;

    std::size_t num_layers() const { return lower.size(); }
    bool is_unstable(NeuronId n) const { return lower[n.layer][n.index] < 0.0 && upper[n.layer][n.index] > 0.0; }

    /// Pos: l := max(l, 0), Neg: u := min(u, 0).
    void apply_splits(const SplitSet& splits);
    void apply_split(NeuronId n, SplitStatus s);

    /// True when some l > u beyond rounding noise, i.e. the constrained domain is empty.
    bool contradictory() const;

    /// Elementwise intersection with `other` (max of lowers, min of uppers).
    void tighten_with(const PreActBounds& other);
};

/** Unstable Free neurons in (layer, index) order. */
std::vector<NeuronId> unstable_free_neurons(const PreActBounds& bounds, const SplitSet& splits);

} // namespace bcrown

#endif
