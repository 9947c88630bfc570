#include "bcrown/optimizer.hpp"

#include "bcrown/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace bcrown {

namespace {

// Subgradient of the dual norm; zero coordinates get 0.
Vector dual_norm_grad(const Vector& a, double q) {
    Vector g = Vector::Zero(a.size());
    if (a.size() == 0) return g;
    if (q == 1.0) {
        for (Eigen::Index i = 0; i < a.size(); ++i) g[i] = (a[i] > 0.0) - (a[i] < 0.0);
        return g;
    }
    if (std::isinf(q)) {
        Eigen::Index idx = 0;
        double m = a.cwiseAbs().maxCoeff(&idx);
        if (m > 0.0) g[idx] = a[idx] > 0.0 ? 1.0 : -1.0;
        return g;
    }
    double norm = dual_norm(a, q);
    if (norm == 0.0) return g;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double s = (a[i] > 0.0) - (a[i] < 0.0);
        g[i] = s * std::pow(std::abs(a[i]) / norm, q - 1.0);
    }
    return g;
}

RelaxParams zeros_like(const RelaxParams& p) {
    RelaxParams z;
    for (std::size_t h = 0; h < p.num_layers(); ++h) {
        z.alpha.push_back(Vector::Zero(p.alpha[h].size()));
        z.beta.push_back(Vector::Zero(p.beta[h].size()));
    }
    return z;
}

bool all_finite(const RelaxParams& p) {
    for (std::size_t h = 0; h < p.num_layers(); ++h) {
        if (!p.alpha[h].allFinite() || !p.beta[h].allFinite()) return false;
    }
    return true;
}

// p += scale * d
void axpy(RelaxParams& p, double scale_alpha, double scale_beta, const RelaxParams& d) {
    for (std::size_t h = 0; h < p.num_layers(); ++h) {
        p.alpha[h] += scale_alpha * d.alpha[h];
        p.beta[h] += scale_beta * d.beta[h];
    }
}

void adam_update(Vector& value, Vector& m, Vector& v, const Vector& g, double lr, const AscentConfig& cfg,
                 double bias1, double bias2) {
    m = cfg.moment_decay1 * m + (1.0 - cfg.moment_decay1) * g;
    v = cfg.moment_decay2 * v + (1.0 - cfg.moment_decay2) * g.cwiseProduct(g);
    Vector mhat = m / bias1;
    Vector vhat = v / bias2;
    value.array() += lr * mhat.array() / (vhat.array().sqrt() + cfg.moment_eps);
}


/*
 * With no unstable Free neuron crossed, the output bound is
 *   g(beta) = -eps * |a0 + P beta|_1 + x0 . (a0 + P beta) + c0 + q . beta,
 * concave and piecewise linear on beta >= 0 (beta restricted to split
 * neurons). Maximizing it is a small LP over (beta, t) with t >= |a0 + P beta|.
 */
struct SplitDual {
    std::vector<NeuronId> vars;
    Vector a0;
    double c0 = 0.0;
    Matrix lin;  // P
    Vector q;
};

std::optional<SplitDual> split_dual(const Network& net, const PreActBounds& bounds, const SplitSet& splits,
                                    const RelaxParams& params) {
    SplitDual d;
    for (std::size_t h = 0; h < params.num_layers(); ++h) {
        for (int j = 0; j < splits.width(h); ++j) {
            if (splits.sign(static_cast<int>(h), j) != 0.0) d.vars.push_back({static_cast<int>(h), j});
        }
    }
    const int m = static_cast<int>(d.vars.size());
    if (m == 0) return std::nullopt;
    const Objective obj = Objective::output(net);
    RelaxParams probe = params;
    for (auto& b : probe.beta) b.setZero();
    const LinearBound base = backward_bound(net, bounds, splits, probe, obj);
    d.a0 = base.coeffs;
    d.c0 = base.constant;
    d.lin.resize(base.coeffs.size(), m);
    d.q.resize(m);
    for (int k = 0; k < m; ++k) {
        probe.beta[d.vars[k].layer][d.vars[k].index] = 1.0;
        LinearBound unit = backward_bound(net, bounds, splits, probe, obj);
        probe.beta[d.vars[k].layer][d.vars[k].index] = 0.0;
        d.lin.col(k) = unit.coeffs - base.coeffs;
        d.q[k] = unit.constant - base.constant;
    }
    return d;
}

/*
 * Variables [beta | t]. With `recession`, a0 and c0 drop out and sum(beta) = 1,
 * so the optimum is the best slope of g along any ray.
 */
LPProblem split_dual_lp(const SplitDual& d, const InputRegion& region, bool recession) {
    const Eigen::Index m = d.lin.cols();
    const Eigen::Index n = d.lin.rows();
    LPProblem lp = LPProblem::with_variables(m + n);
    lp.lower.setZero();
    lp.objective.head(m) = -(d.q + d.lin.transpose() * region.center);
    lp.objective.tail(n).setConstant(region.epsilon);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = recession ? 0.0 : d.a0[i];
        Vector row = Vector::Zero(m + n);
        row.head(m) = d.lin.row(i).transpose();
        row[m + i] = -1.0;
        lp.add_inequality(row, -a);  // (a0 + P beta)_i <= t_i
        row.head(m) = -row.head(m);
        lp.add_inequality(row, a);   // -(a0 + P beta)_i <= t_i
    }
    if (recession) {
        Vector row = Vector::Zero(m + n);
        row.head(m).setOnes();
        lp.add_equality(row, 1.0);
    }
    return lp;
}

RelaxParams with_beta(const RelaxParams& params, const SplitDual& d, const Vector& beta) {
    RelaxParams out = params;
    for (std::size_t k = 0; k < d.vars.size(); ++k) out.beta[d.vars[k].layer][d.vars[k].index] = beta[k];
    return out;
}

// Value a ray must carry the bound to before it is reported as unbounded.
constexpr double kUnboundedTarget = 1e9;

/*
 * Exact maximization of the fully split output bound. If g grows without
 * limit along some ray (the split constraints admit no input), the iterate
 * is pushed along it until the bound passes kUnboundedTarget and `unbounded`
 * is set. Returns true and overwrites `params` if the bound improved.
 */
bool polish_split_dual(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                       const SplitSet& splits, RelaxParams& params, double& value, bool& unbounded) {
    std::optional<SplitDual> d = split_dual(net, bounds, splits, params);
    if (!d) return false;
    const Objective obj = Objective::output(net);
    auto exact = [&](const RelaxParams& p) { return concretize(backward_bound(net, bounds, splits, p, obj), region); };
    const double scale = 1.0 + d->lin.cwiseAbs().maxCoeff() + d->q.cwiseAbs().maxCoeff();
    try {
        LPSolution ray = simplex_solve(split_dual_lp(*d, region, true));
        if (ray.status == LPStatus::Optimal && -ray.value > 1e-9 * scale) {
            Vector start = Vector::Zero(d->q.size());
            for (std::size_t k = 0; k < d->vars.size(); ++k) start[k] = params.beta[d->vars[k].layer][d->vars[k].index];
            const Vector dir = ray.x.head(d->q.size()).cwiseMax(0.0);
            bool improved = false;
            for (double t = 1.0; t < 1e300; t *= 2.0) {
                RelaxParams candidate = with_beta(params, *d, start + t * dir);
                const double v = exact(candidate);
                if (!std::isfinite(v)) break;
                if (v > value) {
                    value = v;
                    params = std::move(candidate);
                    improved = true;
                }
                if (value >= kUnboundedTarget) {
                    unbounded = true;
                    break;
                }
            }
            return improved;
        }
        LPSolution best = simplex_solve(split_dual_lp(*d, region, false));
        if (best.status != LPStatus::Optimal) return false;
        RelaxParams candidate = with_beta(params, *d, best.x.head(d->q.size()).cwiseMax(0.0));
        const double v = exact(candidate);
        if (!(v > value)) return false;
        params = std::move(candidate);
        value = v;
        return true;
    } catch (const LPError&) {
        return false;  // keep the ascent iterate; it is sound on its own
    }
}

} // namespace

BoundGradient bound_gradient(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                             const SplitSet& splits, const RelaxParams& params, const Objective& objective,
                             const Vector& row_weights) {
    BackwardTrace trace;
    BatchBound bb = backward_bound_batch(net, bounds, splits, params, objective, &trace);
    BoundGradient out;
    out.values = concretize_batch(bb, region);
    out.grad = zeros_like(params);

    const Eigen::Index rows = bb.coeffs.rows();
    const double q = region.dual_order();
    // Adjoint of the input coefficients.
    Matrix adj(rows, bb.coeffs.cols());
    for (Eigen::Index r = 0; r < rows; ++r) {
        Vector a = bb.coeffs.row(r).transpose();
        adj.row(r) = row_weights[r] * (region.center - region.epsilon * dual_norm_grad(a, q)).transpose();
    }
    // Sweep upward through the layers the backward pass crossed.
    for (std::size_t t = 0; t < objective.layer; ++t) {
        const Layer& layer = net.layer(t);
        Matrix lambda_adj = adj * layer.weight.transpose();
        lambda_adj += row_weights * layer.bias.transpose();

        const Matrix& coeff = trace.coeff[t];
        const auto& cases = trace.cases[t];
        const Eigen::Index width = coeff.cols();
        for (Eigen::Index j = 0; j < width; ++j) {
            double s = splits.sign(static_cast<int>(t), static_cast<int>(j));
            if (s != 0.0) out.grad.beta[t][j] = s * lambda_adj.col(j).sum();
            double ga = 0.0;
            for (Eigen::Index r = 0; r < rows; ++r) {
                if (cases[static_cast<std::size_t>(r * width + j)] == ReluCase::Slope) ga += lambda_adj(r, j) * coeff(r, j);
            }
            out.grad.alpha[t][j] = ga;
        }
        adj = lambda_adj.cwiseProduct(trace.slope[t]);
        adj += row_weights.asDiagonal() * trace.intercept[t];
    }
    return out;
}

BoundGradient gradient(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                       const SplitSet& splits, const RelaxParams& params) {
    return bound_gradient(net, region, bounds, splits, params, Objective::output(net), Vector::Ones(1));
}

void project(RelaxParams& params, const SplitSet& splits) {
    for (std::size_t h = 0; h < params.num_layers(); ++h) {
        params.alpha[h] = params.alpha[h].cwiseMax(0.0).cwiseMin(1.0);
        Vector& beta = params.beta[h];
        for (Eigen::Index j = 0; j < beta.size(); ++j) {
            if (splits.get({static_cast<int>(h), static_cast<int>(j)}) == SplitStatus::Free || !(beta[j] > 0.0)) {
                beta[j] = 0.0;
            }
        }
    }
}

bool fully_split(const PreActBounds& bounds, const SplitSet& splits, std::size_t objective_layer) {
    for (std::size_t h = 0; h < objective_layer && h < bounds.num_layers(); ++h) {
        for (Eigen::Index j = 0; j < bounds.lower[h].size(); ++j) {
            NeuronId n{static_cast<int>(h), static_cast<int>(j)};
            if (splits.get(n) == SplitStatus::Free && bounds.is_unstable(n)) return false;
        }
    }
    return true;
}

RowAscentResult ascend_rows(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                            const SplitSet& splits, const Objective& objective, ParamGroup& group,
                            const AscentConfig& config) {
    const Eigen::Index rows = objective.rows.rows();
    const Vector weights = Vector::Ones(rows);
    const bool line_search = config.line_search == LineSearchMode::On ||
                             (config.line_search == LineSearchMode::Auto && fully_split(bounds, splits, objective.layer));

    project(group.values, splits);
    BoundGradient current = bound_gradient(net, region, bounds, splits, group.values, objective, weights);

    RowAscentResult result;
    result.best = current.values;
    double best_sum = current.values.sum();
    double current_sum = best_sum;
    RelaxParams best_params = group.values;

    double lr_alpha = config.lr_alpha;
    double lr_beta = config.lr_beta;
    auto record = [&]() {
        if (!current.values.allFinite()) return;
        result.best = result.best.cwiseMax(current.values);
        if (current_sum > best_sum) {
            best_sum = current_sum;
            best_params = group.values;
        }
    };
    for (int it = 0; it < config.iters; ++it) {
        if (!all_finite(current.grad) || !current.values.allFinite()) {
            result.aborted = true;
            break;
        }
        ++group.step;
        const double bias1 = 1.0 - std::pow(config.moment_decay1, group.step);
        const double bias2 = 1.0 - std::pow(config.moment_decay2, group.step);
        for (std::size_t h = 0; h < group.values.num_layers(); ++h) {
            adam_update(group.values.alpha[h], group.first_moment.alpha[h], group.second_moment.alpha[h],
                        current.grad.alpha[h], lr_alpha, config, bias1, bias2);
            adam_update(group.values.beta[h], group.first_moment.beta[h], group.second_moment.beta[h],
                        current.grad.beta[h], lr_beta, config, bias1, bias2);
        }
        project(group.values, splits);
        current = bound_gradient(net, region, bounds, splits, group.values, objective, weights);
        current_sum = current.values.sum();
        lr_alpha *= config.decay;
        lr_beta *= config.decay;
        result.iterations = it + 1;
        record();
    }

    if (line_search && !result.aborted) {
        // Backtracking supergradient steps from the best iterate; stops when no halving improves.
        group.values = best_params;
        current = bound_gradient(net, region, bounds, splits, group.values, objective, weights);
        current_sum = current.values.sum();
        double step = config.lr_beta;
        for (int it = 0; it < config.iters; ++it) {
            if (!all_finite(current.grad)) break;
            bool improved = false;
            for (int halving = 0; halving <= config.max_halvings; ++halving) {
                RelaxParams trial = group.values;
                axpy(trial, step, step, current.grad);
                project(trial, splits);
                BoundGradient cand = bound_gradient(net, region, bounds, splits, trial, objective, weights);
                if (cand.values.allFinite() && cand.values.sum() > current_sum) {
                    group.values = std::move(trial);
                    current = std::move(cand);
                    current_sum = current.values.sum();
                    improved = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if (!improved) break;
            ++result.line_search_steps;
            record();
        }
    }
    group.values = std::move(best_params);
    return result;
}

AscentResult ascend(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                    const SplitSet& splits, ParamGroup& group, const AscentConfig& config) {
    const Objective obj = Objective::output(net);
    AscentResult out;
    out.used_line_search = config.line_search == LineSearchMode::On ||
                           (config.line_search == LineSearchMode::Auto && fully_split(bounds, splits, obj.layer));
    RowAscentResult r = ascend_rows(net, region, bounds, splits, obj, group, config);
    out.iterations = r.iterations;
    out.aborted = r.aborted;
    out.linear = backward_bound(net, bounds, splits, group.values, obj);
    out.best = concretize(out.linear, region);
    if (out.used_line_search && config.exact_polish && std::isinf(region.p) && fully_split(bounds, splits, obj.layer)) {
        if (polish_split_dual(net, region, bounds, splits, group.values, out.best, out.unbounded)) {
            out.polished = true;
            out.linear = backward_bound(net, bounds, splits, group.values, obj);
        }
    }
    return out;
}

JointResult joint_optimize(const Network& net, const InputRegion& region, const SplitSet& splits,
                           ParamState& state, const JointConfig& config) {
    JointResult out;
    out.bounds = interval_bounds(net, region, &splits);
    for (int round = 0; round < config.rounds && !out.infeasible; ++round) {
        for (std::size_t k = 1; k < net.num_hidden(); ++k) {
            if (out.bounds.contradictory()) {
                out.infeasible = true;
                break;
            }
            const int width = net.width(k);
            Objective lower_obj{k, Matrix::Identity(width, width)};
            Objective upper_obj{k, -Matrix::Identity(width, width)};
            RowAscentResult lo = ascend_rows(net, region, out.bounds, splits, lower_obj, state.inter_lower[k], config.ascent);
            RowAscentResult hi = ascend_rows(net, region, out.bounds, splits, upper_obj, state.inter_upper[k], config.ascent);
            out.bounds.lower[k] = out.bounds.lower[k].cwiseMax(lo.best);
            out.bounds.upper[k] = out.bounds.upper[k].cwiseMin(-hi.best);
            for (int j = 0; j < width; ++j) {
                NeuronId n{static_cast<int>(k), j};
                out.bounds.apply_split(n, splits.get(n));
            }
        }
    }
    if (out.infeasible || out.bounds.contradictory()) {
        out.infeasible = true;
        out.bound = kInfNorm;
        return out;
    }
    AscentResult final_result = ascend(net, region, out.bounds, splits, state.output, config.ascent);
    // The relaxation is not guaranteed to beat plain interval arithmetic; both are sound.
    out.bound = std::max(final_result.best, interval_output_lower(net, region, out.bounds));
    out.linear = std::move(final_result.linear);
    return out;
}

} // namespace bcrown
