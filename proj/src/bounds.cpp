#include "bcrown/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bcrown {

NeuronRelaxation relax_neuron(double lower, double upper, SplitStatus status, double coeff, double alpha) {
    if (std::isnan(lower) || std::isnan(upper) || std::isnan(coeff)) {
        throw BoundError("relu relaxation: NaN input");
    }
    if (lower > upper + 1e-9 * (1.0 + std::abs(lower) + std::abs(upper))) {
        throw BoundError("relu relaxation: lower bound " + std::to_string(lower) + " exceeds upper bound " +
                         std::to_string(upper));
    }
    if (status == SplitStatus::Pos) return {1.0, 0.0, ReluCase::Active};
    if (status == SplitStatus::Neg) return {0.0, 0.0, ReluCase::Inactive};
    // u <= 0 first so that a zero-width interval at 0 is inactive.
    if (upper <= 0.0) return {0.0, 0.0, ReluCase::Inactive};
    if (lower >= 0.0) return {1.0, 0.0, ReluCase::Active};
    if (coeff >= 0.0) {
        if (std::isnan(alpha)) throw BoundError("relu relaxation: NaN alpha");
        return {alpha, 0.0, ReluCase::Slope};
    }
    double width = upper - lower;
    return {upper / width, -upper * lower / width, ReluCase::Upper};
}

RelaxCoeffs relu_layer_relaxation(const Vector& lower, const Vector& upper, std::span<const SplitStatus> status,
                                  const Vector& coeff, const Vector& alpha) {
    const Eigen::Index n = lower.size();
    if (upper.size() != n || coeff.size() != n || alpha.size() != n || static_cast<Eigen::Index>(status.size()) != n) {
        throw BoundError("relu relaxation: dimension mismatch");
    }
    RelaxCoeffs out;
    out.slope.resize(n);
    out.intercept.resize(n);
    out.cases.resize(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
        NeuronRelaxation r = relax_neuron(lower[j], upper[j], status[static_cast<std::size_t>(j)], coeff[j], alpha[j]);
        out.slope[j] = r.slope;
        out.intercept[j] = r.intercept;
        out.cases[static_cast<std::size_t>(j)] = r.kind;
    }
    return out;
}

Objective Objective::output(const Network& net) {
    if (net.output_dim() != 1) throw BoundError("output objective needs a scalar-output network");
    return {net.num_layers() - 1, Matrix::Ones(1, 1)};
}

BatchBound backward_bound_batch(const Network& net, const PreActBounds& bounds, const SplitSet& splits,
                                const RelaxParams& params, const Objective& objective, BackwardTrace* trace) {
    const std::size_t top = objective.layer;
    if (top >= net.num_layers() || objective.rows.cols() != net.width(top)) {
        throw BoundError("backward bound: objective does not match layer width");
    }
    if (params.num_layers() < top || bounds.num_layers() < top || splits.num_layers() < top) {
        throw BoundError("backward bound: parameters/bounds do not cover the crossed layers");
    }
    const Eigen::Index rows = objective.rows.rows();
    if (trace) {
        trace->coeff.assign(top, Matrix());
        trace->slope.assign(top, Matrix());
        trace->intercept.assign(top, Matrix());
        trace->cases.assign(top, {});
    }

    Matrix lambda = objective.rows;
    Vector constant = Vector::Zero(rows);
    for (std::size_t t = top;; --t) {
        const Layer& layer = net.layer(t);
        constant.noalias() += lambda * layer.bias;
        Matrix coeff = lambda * layer.weight;
        if (t == 0) {
            return {std::move(coeff), std::move(constant)};
        }
        const std::size_t h = t - 1;
        const Eigen::Index width = coeff.cols();
        const Vector& alpha = params.alpha[h];
        const Vector& beta = params.beta[h];
        if (alpha.size() != width || beta.size() != width) {
            throw BoundError("backward bound: parameter size mismatch at hidden layer " + std::to_string(h));
        }
        Matrix next(rows, width);
        Matrix slope, intercept;
        std::vector<ReluCase> cases;
        if (trace) {
            slope.resize(rows, width);
            intercept.resize(rows, width);
            cases.resize(static_cast<std::size_t>(rows * width));
        }
        auto status = splits.layer(h);
        for (Eigen::Index j = 0; j < width; ++j) {
            const double l = bounds.lower[h][j];
            const double u = bounds.upper[h][j];
            const SplitStatus s = status[static_cast<std::size_t>(j)];
            const double split_term = s == SplitStatus::Free ? 0.0 : beta[j] * splits.sign(static_cast<int>(h), static_cast<int>(j));
            for (Eigen::Index r = 0; r < rows; ++r) {
                NeuronRelaxation rel = relax_neuron(l, u, s, coeff(r, j), alpha[j]);
                next(r, j) = coeff(r, j) * rel.slope + split_term;
                constant[r] += coeff(r, j) * rel.intercept;
                if (trace) {
                    slope(r, j) = rel.slope;
                    intercept(r, j) = rel.intercept;
                    cases[static_cast<std::size_t>(r * width + j)] = rel.kind;
                }
            }
        }
        if (trace) {
            trace->coeff[h] = std::move(coeff);
            trace->slope[h] = std::move(slope);
            trace->intercept[h] = std::move(intercept);
            trace->cases[h] = std::move(cases);
        }
        lambda = std::move(next);
    }
}

LinearBound backward_bound(const Network& net, const PreActBounds& bounds, const SplitSet& splits,
                           const RelaxParams& params, const Objective& objective) {
    if (objective.rows.rows() != 1) throw BoundError("backward_bound expects a single objective row");
    BatchBound b = backward_bound_batch(net, bounds, splits, params, objective);
    return {b.coeffs.row(0).transpose(), b.constants[0]};
}

double dual_norm(const Vector& a, double q) {
    if (a.size() == 0) return 0.0;
    if (q == 1.0) return a.lpNorm<1>();
    if (std::isinf(q)) return a.lpNorm<Eigen::Infinity>();
    if (q == 2.0) return a.norm();
    return std::pow(a.cwiseAbs().array().pow(q).sum(), 1.0 / q);
}

double concretize(const LinearBound& bound, const InputRegion& region) {
    return -dual_norm(bound.coeffs, region.dual_order()) * region.epsilon + bound.coeffs.dot(region.center) +
           bound.constant;
}

Vector concretize_batch(const BatchBound& bound, const InputRegion& region) {
    const double q = region.dual_order();
    Vector out(bound.coeffs.rows());
    for (Eigen::Index r = 0; r < bound.coeffs.rows(); ++r) {
        Vector a = bound.coeffs.row(r).transpose();
        out[r] = -dual_norm(a, q) * region.epsilon + a.dot(region.center) + bound.constants[r];
    }
    return out;
}

Vector argmin_input(const LinearBound& bound, const InputRegion& region) {
    if (!std::isinf(region.p)) throw BoundError("argmin_input supports the l-inf ball only");
    Vector x = region.center;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (bound.coeffs[i] > 0.0) {
            x[i] -= region.epsilon;
        } else if (bound.coeffs[i] < 0.0) {
            x[i] += region.epsilon;
        }
    }
    return x;
}

PreActBounds interval_bounds(const Network& net, const InputRegion& region, const SplitSet* splits) {
    PreActBounds out;
    const double q = region.dual_order();
    const Layer& first = net.layer(0);
    Vector mid = first.weight * region.center + first.bias;
    Vector rad(first.weight.rows());
    for (Eigen::Index r = 0; r < first.weight.rows(); ++r) {
        rad[r] = dual_norm(first.weight.row(r).transpose(), q) * region.epsilon;
    }
    for (std::size_t h = 0; h < net.num_hidden(); ++h) {
        if (h > 0) {
            const Layer& layer = net.layer(h);
            Vector post_lo = out.lower[h - 1].cwiseMax(0.0);
            Vector post_hi = out.upper[h - 1].cwiseMax(0.0);
            Vector c = 0.5 * (post_lo + post_hi);
            Vector r = 0.5 * (post_hi - post_lo);
            mid = layer.weight * c + layer.bias;
            rad = layer.weight.cwiseAbs() * r;
        }
        out.lower.push_back(mid - rad);
        out.upper.push_back(mid + rad);
        if (splits) {
            for (int j = 0; j < net.width(h); ++j) {
                NeuronId n{static_cast<int>(h), j};
                out.apply_split(n, splits->get(n));
            }
        }
    }
    return out;
}

double interval_output_lower(const Network& net, const InputRegion& region, const PreActBounds& bounds) {
    const Layer& out = net.layer(net.num_layers() - 1);
    if (net.num_hidden() == 0) {
        return concretize({out.weight.row(0).transpose(), out.bias[0]}, region);
    }
    const Vector post_lo = bounds.lower.back().cwiseMax(0.0);
    const Vector post_hi = bounds.upper.back().cwiseMax(0.0);
    const Vector w = out.weight.row(0).transpose();
    return out.bias[0] + w.cwiseMax(0.0).dot(post_lo) + w.cwiseMin(0.0).dot(post_hi);
}

Vector bound_layer_neurons(const Network& net, const InputRegion& region, const PreActBounds& bounds,
                           const SplitSet& splits, const RelaxParams& params, std::size_t layer, double sign) {
    const int width = net.width(layer);
    Objective obj{layer, sign * Matrix::Identity(width, width)};
    return concretize_batch(backward_bound_batch(net, bounds, splits, params, obj), region);
}

PreActBounds compute_intermediate_bounds(const Network& net, const InputRegion& region, const SplitSet& splits,
                                         const ParamState& params) {
    PreActBounds result = interval_bounds(net, region, &splits);
    for (std::size_t k = 1; k < net.num_hidden(); ++k) {
        if (result.contradictory()) break;
        Vector lo = bound_layer_neurons(net, region, result, splits, params.inter_lower[k].values, k, 1.0);
        Vector hi = -bound_layer_neurons(net, region, result, splits, params.inter_upper[k].values, k, -1.0);
        result.lower[k] = result.lower[k].cwiseMax(lo);
        result.upper[k] = result.upper[k].cwiseMin(hi);
        for (int j = 0; j < net.width(k); ++j) {
            NeuronId n{static_cast<int>(k), j};
            result.apply_split(n, splits.get(n));
        }
    }
    return result;
}

} // namespace bcrown
