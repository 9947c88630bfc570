#include "bcrown/oracle.hpp"

#include <cmath>
#include <random>
#include <string>

namespace bcrown {

namespace {

struct SignConstraint {
    Vector row;  // constraint row . x <= rhs
    double rhs;
};

class PatternSearch {
public:
    PatternSearch(const Network& net, const InputRegion& region, const SplitSet& splits,
                  std::vector<PatternResult>* leaves)
        : net_(net), region_(region), splits_(splits), interval_(interval_bounds(net, region, &splits)),
          leaves_(leaves) {}

    ExactResult run() {
        const Layer& first = net_.layer(0);
        descend(0, first.weight, first.bias, {});
        return best_;
    }

private:
    LPProblem box_lp() const {
        const Eigen::Index d = net_.input_dim();
        LPProblem lp = LPProblem::with_variables(d);
        lp.lower = region_.center.array() - region_.epsilon;
        lp.upper = region_.center.array() + region_.epsilon;
        return lp;
    }

    LPSolution solve(const Vector& objective, const std::vector<SignConstraint>& cons) const {
        LPProblem lp = box_lp();
        lp.objective = objective;
        for (const SignConstraint& c : cons) lp.add_inequality(c.row, c.rhs);
        return simplex_solve(lp);
    }

    // Affine range of row . x + c over the box.
    std::pair<double, double> box_range(const Vector& row, double c) const {
        double mid = row.dot(region_.center) + c;
        double rad = row.lpNorm<1>() * region_.epsilon;
        return {mid - rad, mid + rad};
    }

    // pre = map * x + offset is the pre-activation of hidden layer `layer` under the current pattern.
    void descend(std::size_t layer, const Matrix& map, const Vector& offset, std::vector<SignConstraint> cons) {
        if (layer == net_.num_hidden()) {
            ++best_.patterns;
            LPSolution sol = solve(map.row(0).transpose(), cons);
            const bool feasible = sol.status == LPStatus::Optimal;
            const double value = feasible ? sol.value + offset[0] : 0.0;
            if (leaves_) leaves_->push_back({path_, feasible, value, sol.x});
            if (!feasible) return;
            if (best_.empty || value < best_.min_value) {
                best_.empty = false;
                best_.min_value = value;
                best_.argmin = sol.x;
            }
            return;
        }
        assign(layer, 0, map, offset, Vector::Zero(map.rows()), std::move(cons), false);
    }

    void assign(std::size_t layer, int j, const Matrix& map, const Vector& offset, Vector active,
                std::vector<SignConstraint> cons, bool added) {
        const int width = net_.width(layer);
        if (j == width) {
            if (added && solve(Vector::Zero(net_.input_dim()), cons).status != LPStatus::Optimal) return;
            const Layer& next = net_.layer(layer + 1);
            Matrix masked = active.asDiagonal() * map;
            Vector masked_offset = active.cwiseProduct(offset);
            descend(layer + 1, next.weight * masked, next.weight * masked_offset + next.bias, std::move(cons));
            return;
        }
        const NeuronId n{static_cast<int>(layer), j};
        const Vector row = map.row(j).transpose();
        const double c = offset[j];
        const SplitStatus status = splits_.get(n);
        auto with_sign = [&](bool on, bool constrain) {
            std::vector<SignConstraint> next_cons = cons;
            if (constrain) {
                // active: -(row.x + c) <= 0, inactive: row.x + c <= 0
                next_cons.push_back(on ? SignConstraint{-row, c} : SignConstraint{row, -c});
            }
            Vector next_active = active;
            next_active[j] = on ? 1.0 : 0.0;
            assign(layer, j + 1, map, offset, std::move(next_active), std::move(next_cons), added || constrain);
        };
        if (status == SplitStatus::Pos) return with_sign(true, true);
        if (status == SplitStatus::Neg) return with_sign(false, true);

        const double il = interval_.lower[layer][j];
        const double iu = interval_.upper[layer][j];
        if (iu <= 0.0) return with_sign(false, false);
        if (il >= 0.0) return with_sign(true, false);
        auto [lo, hi] = box_range(row, c);
        if (hi <= 0.0) return with_sign(false, false);
        if (lo >= 0.0) return with_sign(true, false);
        path_.push_back(1);
        with_sign(true, true);
        path_.back() = -1;
        with_sign(false, true);
        path_.pop_back();
    }

    const Network& net_;
    const InputRegion& region_;
    const SplitSet& splits_;
    PreActBounds interval_;
    std::vector<PatternResult>* leaves_;
    std::vector<std::int8_t> path_;
    ExactResult best_;
};

} // namespace

ExactResult exact_min(const Network& net, const InputRegion& region, const SplitSet& splits,
                      std::vector<PatternResult>* leaves) {
    if (net.output_dim() != 1) throw DimensionError("exact_min needs a scalar-output network");
    if (!std::isinf(region.p)) throw OracleGuardError("exact_min supports the l-inf ball only");
    PreActBounds ib = interval_bounds(net, region, &splits);
    int unstable = static_cast<int>(unstable_free_neurons(ib, splits).size());
    if (unstable > kMaxOracleUnstable) {
        throw OracleGuardError("exact_min: " + std::to_string(unstable) + " unstable neurons exceed the guard of " +
                               std::to_string(kMaxOracleUnstable));
    }
    return PatternSearch(net, region, splits, leaves).run();
}

LPProblem build_relaxation_lp(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                              const SplitSet& splits, double* objective_offset) {
    if (!std::isinf(region.p)) throw BoundError("triangle LP supports the l-inf ball only");
    const int d0 = net.input_dim();
    // Variable layout: x, then (z_h, zhat_h) per hidden layer.
    std::vector<int> z_off, zh_off;
    int nvars = d0;
    for (std::size_t h = 0; h < net.num_hidden(); ++h) {
        z_off.push_back(nvars);
        nvars += net.width(h);
        zh_off.push_back(nvars);
        nvars += net.width(h);
    }
    LPProblem lp = LPProblem::with_variables(nvars);
    for (int i = 0; i < d0; ++i) {
        lp.lower[i] = region.center[i] - region.epsilon;
        lp.upper[i] = region.center[i] + region.epsilon;
    }
    auto prev_offset = [&](std::size_t h) { return h == 0 ? 0 : zh_off[h - 1]; };

    for (std::size_t h = 0; h < net.num_hidden(); ++h) {
        const Layer& layer = net.layer(h);
        for (int j = 0; j < net.width(h); ++j) {
            // z_j - W_j . prev = b_j
            Vector row = Vector::Zero(nvars);
            row[z_off[h] + j] = 1.0;
            row.segment(prev_offset(h), layer.weight.cols()) = -layer.weight.row(j).transpose();
            lp.add_equality(row, layer.bias[j]);

            const int z = z_off[h] + j;
            const int zh = zh_off[h] + j;
            const double l = bounds.lower[h][j];
            const double u = bounds.upper[h][j];
            const SplitStatus s = splits.get({static_cast<int>(h), j});
            auto eq_pair = [&]() {  // zhat = z
                Vector r = Vector::Zero(nvars);
                r[zh] = 1.0;
                r[z] = -1.0;
                lp.add_equality(r, 0.0);
            };
            if (s == SplitStatus::Pos) {
                eq_pair();
                lp.lower[z] = 0.0;
            } else if (s == SplitStatus::Neg) {
                lp.lower[zh] = 0.0;
                lp.upper[zh] = 0.0;
                lp.upper[z] = 0.0;
            } else if (u <= 0.0) {
                lp.lower[zh] = 0.0;
                lp.upper[zh] = 0.0;
            } else if (l >= 0.0) {
                eq_pair();
            } else {
                lp.lower[zh] = 0.0;
                Vector above = Vector::Zero(nvars);  // z - zhat <= 0
                above[z] = 1.0;
                above[zh] = -1.0;
                lp.add_inequality(above, 0.0);
                // zhat - u/(u-l) z <= -u l/(u-l)
                const double slope = u / (u - l);
                Vector tri = Vector::Zero(nvars);
                tri[zh] = 1.0;
                tri[z] = -slope;
                lp.add_inequality(tri, -slope * l);
            }
        }
    }
    const Layer& out = net.layer(net.num_layers() - 1);
    lp.objective.segment(prev_offset(net.num_hidden()), out.weight.cols()) = out.weight.row(0).transpose();
    if (objective_offset) *objective_offset = out.bias[0];
    return lp;
}

LPBoundResult lp_relaxation_min(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                                const SplitSet& splits) {
    if (net.output_dim() != 1) throw DimensionError("lp_relaxation_min needs a scalar-output network");
    double offset = 0.0;
    LPProblem lp = build_relaxation_lp(net, region, bounds, splits, &offset);
    LPSolution sol = simplex_solve(lp);
    if (sol.status == LPStatus::Infeasible) return {true, 0.0};
    return {false, sol.value + offset};
}

Vector input_gradient(const Network& net, const Vector& x) {
    std::vector<Vector> pre = pre_activations(net, x);
    Vector g = net.layer(net.num_layers() - 1).weight.row(0).transpose();
    for (std::size_t t = net.num_layers() - 1; t-- > 0;) {
        Vector masked = g.cwiseProduct((pre[t].array() > 0.0).cast<double>().matrix());
        g = net.layer(t).weight.transpose() * masked;
    }
    return g;
}

AttackResult pgd_attack(const Network& net, const InputRegion& region, int steps, int restarts, std::uint64_t seed) {
    if (!std::isinf(region.p)) throw BoundError("pgd_attack supports the l-inf ball only");
    AttackResult best{forward_eval(net, region.center), region.center};
    if (region.epsilon == 0.0) return best;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const double step = region.epsilon / 10.0;
    const Vector lo = region.center.array() - region.epsilon;
    const Vector hi = region.center.array() + region.epsilon;
    for (int r = 0; r < restarts; ++r) {
        Vector x = region.center;
        if (r > 0) {
            for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += region.epsilon * unif(rng);
        }
        for (int s = 0; s < steps; ++s) {
            Vector g = input_gradient(net, x);
            for (Eigen::Index i = 0; i < x.size(); ++i) x[i] -= step * ((g[i] > 0.0) - (g[i] < 0.0));
            x = x.cwiseMax(lo).cwiseMin(hi);
            double v = forward_eval(net, x);
            if (v < best.value) best = {v, x};
        }
    }
    return best;
}

} // namespace bcrown
