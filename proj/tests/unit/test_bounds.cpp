#include "doctest.h"

#include "bcrown/bounds.hpp"
#include "bcrown/oracle.hpp"
#include "instances.hpp"

#include <random>

using namespace bcrown;
using namespace bcrown::testing;

namespace {

PreActBounds hand_bounds() {
    PreActBounds b;
    b.lower = {Vector::Constant(2, -2.0)};
    b.upper = {Vector::Constant(2, 2.0)};
    return b;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

/// Network whose scalar output is sign * z(layer)_index of `net`.
Network neuron_network(const Network& net, std::size_t layer, int index, double sign) {
    std::vector<Layer> layers(net.layers().begin(), net.layers().begin() + static_cast<long>(layer) + 1);
    Layer& last = layers.back();
    last.weight = sign * Matrix(last.weight.row(index));
    last.bias = Vector::Constant(1, sign * last.bias[index]);
    return Network(std::move(layers));
}

} // namespace

TEST_CASE("relaxation case table") {
    NeuronRelaxation active = relax_neuron(1, 2, SplitStatus::Free, -3.0, 0.3);
    CHECK(active.slope == 1.0);
    CHECK(active.intercept == 0.0);
    CHECK(active.kind == ReluCase::Active);

    NeuronRelaxation inactive = relax_neuron(-2, -1, SplitStatus::Free, 1.0, 0.3);
    CHECK(inactive.slope == 0.0);
    CHECK(inactive.intercept == 0.0);

    NeuronRelaxation upper = relax_neuron(-1, 1, SplitStatus::Free, -1.0, 0.3);
    CHECK(upper.slope == 0.5);
    CHECK(upper.intercept == 0.5);
    CHECK(upper.kind == ReluCase::Upper);

    NeuronRelaxation slope = relax_neuron(-1, 1, SplitStatus::Free, 2.0, 0.3);
    CHECK(slope.slope == 0.3);
    CHECK(slope.intercept == 0.0);
    CHECK(slope.kind == ReluCase::Slope);

    NeuronRelaxation neg = relax_neuron(-1, 1, SplitStatus::Neg, -1.0, 0.3);
    CHECK(neg.slope == 0.0);
    CHECK(neg.intercept == 0.0);

    NeuronRelaxation pos = relax_neuron(-1, 1, SplitStatus::Pos, -1.0, 0.3);
    CHECK(pos.slope == 1.0);
    CHECK(pos.intercept == 0.0);

    CHECK_THROWS_AS(relax_neuron(1, -1, SplitStatus::Free, 1.0, 0.5), BoundError);
    CHECK_THROWS_AS(relax_neuron(std::nan(""), 1, SplitStatus::Free, 1.0, 0.5), BoundError);
}

TEST_CASE("relaxation lower-bounds the weighted ReLU") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 5;
        Vector l(n), u(n), w(n), alpha(n);
        for (int j = 0; j < n; ++j) {
            const double a = normal(rng), b = normal(rng);
            l[j] = std::min(a, b);
            u[j] = std::max(a, b);
            w[j] = normal(rng);
            alpha[j] = unif(rng);
        }
        std::vector<SplitStatus> status(n, SplitStatus::Free);
        RelaxCoeffs rc = relu_layer_relaxation(l, u, status, w, alpha);
        for (int j = 0; j < n; ++j) {
            CHECK(rc.slope[j] >= 0.0);
            CHECK(rc.slope[j] <= 1.0);
        }
        double worst = kInfNorm;
        for (int k = 0; k < 100000 / 20; ++k) {
            Vector v(n);
            for (int j = 0; j < n; ++j) v[j] = l[j] + (u[j] - l[j]) * unif(rng);
            const double lhs = w.dot(v.cwiseMax(0.0));
            const double rhs = w.dot(rc.slope.cwiseProduct(v)) + w.dot(rc.intercept);
            worst = std::min(worst, lhs - rhs);
        }
        CHECK(worst >= -1e-9);
    }
}

TEST_CASE("backward bound on the identity network is the layer itself") {
    Layer layer{Matrix(1, 2), Vector::Constant(1, 0.5)};
    layer.weight << 2, -1;
    Network net({layer});
    LinearBound lb = backward_bound(net, PreActBounds{}, SplitSet(net), RelaxParams::initial(net, 0),
                                    Objective::output(net));
    CHECK(lb.coeffs == vec({2, -1}));
    CHECK(lb.constant == 0.5);
}

TEST_CASE("hand network back-substitution") {
    Network net = hand_network();
    SplitSet splits(net);
    RelaxParams params = RelaxParams::initial(net, 1);
    params.alpha[0] = vec({0.5, 0.5});
    LinearBound lb = backward_bound(net, hand_bounds(), splits, params, Objective::output(net));
    CHECK(lb.coeffs[0] == doctest::Approx(0.0));
    CHECK(lb.coeffs[1] == doctest::Approx(1.0));
    CHECK(lb.constant == doctest::Approx(-1.0));

    splits.set({0, 1}, SplitStatus::Neg);
    params.alpha[0] = vec({0.0, 0.0});
    LinearBound neg = backward_bound(net, hand_bounds(), splits, params, Objective::output(net));
    CHECK(neg.coeffs.isZero());
    CHECK(neg.constant == 0.0);
}

TEST_CASE("concretization examples") {
    InputRegion r0 = unit_box(2);
    CHECK(concretize({vec({1, 0}), 0.0}, r0) == -1.0);

    InputRegion r1;
    r1.center = vec({1, 1});
    r1.epsilon = 0.5;
    CHECK(concretize({vec({1, -2}), 3.0}, r1) == doctest::Approx(0.5));

    r1.epsilon = 0.0;
    CHECK(concretize({vec({1, -2}), 3.0}, r1) == doctest::Approx(2.0));

    InputRegion l2 = unit_box(2);
    l2.p = 2.0;
    CHECK(concretize({vec({3, 4}), 0.0}, l2) == doctest::Approx(-5.0));
    CHECK(dual_norm(vec({3, -4}), 1.0) == 7.0);
    CHECK(dual_norm(vec({3, -4}), kInfNorm) == 4.0);
}

TEST_CASE("argmin examples") {
    CHECK(argmin_input({vec({1, -1}), 0.0}, unit_box(2)) == vec({-1, 1}));

    InputRegion r;
    r.center = vec({0.5, 0.5});
    r.epsilon = 0.25;
    CHECK(argmin_input({vec({0, 2}), 0.0}, r) == vec({0.5, 0.25}));
    CHECK(argmin_input({Vector::Zero(2), 0.0}, r) == r.center);
}

TEST_CASE("interval bound examples") {
    Network identity({Layer{Matrix::Identity(3, 3), Vector::Zero(3)}, Layer{Matrix::Ones(1, 3), Vector::Zero(1)}});
    PreActBounds ib = interval_bounds(identity, unit_box(3));
    CHECK(ib.lower[0] == Vector::Constant(3, -1.0));
    CHECK(ib.upper[0] == Vector::Constant(3, 1.0));

    Network sum({Layer{Matrix::Ones(1, 2), Vector::Zero(1)}, Layer{Matrix::Ones(1, 1), Vector::Zero(1)}});
    PreActBounds sb = interval_bounds(sum, unit_box(2));
    CHECK(sb.lower[0][0] == -2.0);
    CHECK(sb.upper[0][0] == 2.0);
}

TEST_CASE("interval bounds bracket every exact pre-activation range") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Network net = random_network(rng, {2, 4, 1});
        InputRegion region = random_region(rng, 2, 0.5);
        PreActBounds ib = interval_bounds(net, region);
        for (int j = 0; j < 4; ++j) {
            Network lo = neuron_network(net, 0, j, 1.0);
            Network hi = neuron_network(net, 0, j, -1.0);
            CHECK(ib.lower[0][j] <= exact_min(lo, region, SplitSet(lo)).min_value + 1e-9);
            CHECK(ib.upper[0][j] >= -exact_min(hi, region, SplitSet(hi)).min_value - 1e-9);
        }
    }
}

TEST_CASE("intermediate bounds: first layer is interval, later layers bracket the exact range") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        Network net = random_network(rng, {2, 4, 4, 1});
        InputRegion region = random_region(rng, 2, 0.4);
        SplitSet splits(net);
        PreActBounds cb = compute_intermediate_bounds(net, region, splits, ParamState::initial(net));
        PreActBounds ib = interval_bounds(net, region);
        CHECK(cb.lower[0] == ib.lower[0]);
        CHECK(cb.upper[0] == ib.upper[0]);
        for (std::size_t h = 0; h < 2; ++h) {
            for (int j = 0; j < 4; ++j) {
                CHECK(cb.lower[h][j] >= ib.lower[h][j]);
                CHECK(cb.upper[h][j] <= ib.upper[h][j]);
                Network lo = neuron_network(net, h, j, 1.0);
                Network hi = neuron_network(net, h, j, -1.0);
                CHECK(cb.lower[h][j] <= exact_min(lo, region, SplitSet(lo)).min_value + 1e-9);
                CHECK(cb.upper[h][j] >= -exact_min(hi, region, SplitSet(hi)).min_value - 1e-9);
            }
        }
    }
}

TEST_CASE("a positive split on the first layer never loosens the next layer") {
    std::mt19937_64 rng(43);
    int compared = 0;
    for (int trial = 0; trial < 40; ++trial) {
        Network net = random_network(rng, {2, 4, 4, 1});
        InputRegion region = random_region(rng, 2, 0.5);
        SplitSet free(net);
        PreActBounds base = compute_intermediate_bounds(net, region, free, ParamState::initial(net));
        std::vector<NeuronId> open = unstable_free_neurons(base, free);
        if (open.empty() || open.front().layer != 0) continue;
        SplitSet split = free;
        split.set(open.front(), SplitStatus::Pos);
        PreActBounds tight = compute_intermediate_bounds(net, region, split, ParamState::initial(net));
        if (tight.contradictory()) continue;
        ++compared;
        for (int j = 0; j < 4; ++j) CHECK(tight.lower[1][j] >= base.lower[1][j] - 1e-12);
    }
    CHECK(compared > 10);
}

TEST_CASE("bounds are sound under random splits and parameters") {
    std::mt19937_64 rng(51);
    int checked = 0;
    for (int trial = 0; trial < 30; ++trial) {
        Network net = random_network(rng, {2, 3, 3, 1});
        InputRegion region = random_region(rng, 2, 0.5);
        SplitSet splits = random_splits(rng, net, region, 0.5);
        PreActBounds bounds = compute_intermediate_bounds(net, region, splits, ParamState::initial(net));
        if (bounds.contradictory()) continue;
        RelaxParams params = random_params(rng, net, splits, 2.0);
        const double bound = concretize(backward_bound(net, bounds, splits, params, Objective::output(net)), region);
        double worst = kInfNorm;
        for (const Vector& x : sample_box(rng, region, 10000)) {
            if (!satisfies_splits(net, splits, x)) continue;
            worst = std::min(worst, forward_eval(net, x) - bound);
            ++checked;
        }
        CHECK(worst >= -1e-9);
    }
    CHECK(checked > 0);
}
