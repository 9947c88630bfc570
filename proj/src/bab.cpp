#include "bcrown/bab.hpp"

#include "bcrown/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace bcrown {

const char* to_string(VerdictStatus s) {
    switch (s) {
    case VerdictStatus::Verified: return "verified";
    case VerdictStatus::Falsified: return "falsified";
    case VerdictStatus::Unknown: return "unknown";
    }
    return "unknown";
}

namespace {

RelaxParams without_beta(const RelaxParams& p) {
    RelaxParams out = p;
    for (Vector& b : out.beta) b.setZero();
    return out;
}

bool before(const NeuronScore& a, const NeuronScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.neuron < b.neuron;
}

void set_witness(Domain& d, const Network& net, const InputRegion& region, const LinearBound& linear) {
    d.witness = std::isinf(region.p) ? argmin_input(linear, region) : region.center;
    d.upper = forward_eval(net, d.witness);
}

/*
 * With no unstable Free neuron left the network is affine on the domain and
 * the triangle LP is exact: its optimum is the domain minimum and its x-part
 * a witness inside the domain.
 */
bool settle_leaf(Domain& d, const Network& net, const InputRegion& region) {
    if (!std::isinf(region.p)) return false;
    double offset = 0.0;
    LPProblem lp = build_relaxation_lp(net, region, d.bounds, d.splits, &offset);
    LPSolution sol = simplex_solve(lp);
    if (sol.status == LPStatus::Infeasible) {
        d.infeasible = true;
        d.lower = kInfNorm;
        return true;
    }
    d.lower = std::max(d.lower, sol.value + offset);
    Vector x = sol.x.head(net.input_dim());
    x = x.array().max(region.center.array() - region.epsilon).min(region.center.array() + region.epsilon).matrix();
    const double fx = forward_eval(net, x);
    if (fx < d.upper) {
        d.upper = fx;
        d.witness = std::move(x);
    }
    return true;
}

// Returns true when the domain was settled by the leaf LP.
bool bound_domain(Domain& d, const Network& net, const InputRegion& region, const BabConfig& cfg, bool is_root) {
    LinearBound linear;
    if (is_root || cfg.recompute_intermediate) {
        JointConfig jc = cfg.root;
        if (!is_root) jc.ascent = cfg.child;
        JointResult jr = joint_optimize(net, region, d.splits, d.params, jc);
        d.bounds = std::move(jr.bounds);
        if (jr.infeasible) {
            d.infeasible = true;
            d.lower = kInfNorm;
            return false;
        }
        d.lower = jr.bound;
        linear = std::move(jr.linear);
    } else {
        if (d.bounds.contradictory()) {
            d.infeasible = true;
            d.lower = kInfNorm;
            return false;
        }
        AscentResult r = ascend(net, region, d.bounds, d.splits, d.params.output, cfg.child);
        if (r.unbounded) {
            d.infeasible = true;
            d.lower = kInfNorm;
            return false;
        }
        d.lower = std::max(r.best, interval_output_lower(net, region, d.bounds));
        linear = std::move(r.linear);
    }
    set_witness(d, net, region, linear);
    if (d.lower < 0.0 && unstable_free_neurons(d.bounds, d.splits).empty()) return settle_leaf(d, net, region);
    return false;
}

struct Entry {
    double lower;
    std::uint64_t seq;
    Domain domain;
};

// Heap order: smallest lower bound on top, earlier insertion first on ties.
bool heap_less(const Entry& a, const Entry& b) {
    if (a.lower != b.lower) return a.lower > b.lower;
    return a.seq > b.seq;
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace

std::vector<NeuronScore> babsr_score(const Network& net, const Domain& domain) {
    std::vector<NeuronId> unstable = unstable_free_neurons(domain.bounds, domain.splits);
    std::vector<NeuronScore> out;
    if (unstable.empty()) return out;
    BackwardTrace trace;
    backward_bound_batch(net, domain.bounds, domain.splits, without_beta(domain.params.output.values),
                         Objective::output(net), &trace);
    for (const NeuronId& n : unstable) {
        const double l = domain.bounds.lower[n.layer][n.index];
        const double u = domain.bounds.upper[n.layer][n.index];
        const double coeff = trace.coeff[n.layer](0, n.index);
        out.push_back({n, std::abs(coeff) * (-u * l / (u - l))});
    }
    std::stable_sort(out.begin(), out.end(), before);
    return out;
}

std::optional<NeuronId> babsr_choice(const Network& net, const Domain& domain) {
    std::vector<NeuronScore> scores = babsr_score(net, domain);
    if (scores.empty()) return std::nullopt;
    return scores.front().neuron;
}

std::optional<NeuronId> fsb_branching(const Network& net, const InputRegion& region, const Domain& domain, int k) {
    if (k < 1) throw BoundError("fsb_branching needs k >= 1");
    std::vector<NeuronScore> scores = babsr_score(net, domain);
    if (scores.empty()) return std::nullopt;
    const RelaxParams probe = without_beta(domain.params.output.values);
    const Objective obj = Objective::output(net);
    const std::size_t count = std::min(scores.size(), static_cast<std::size_t>(k));
    std::optional<NeuronId> best;
    double best_value = -kInfNorm;
    for (std::size_t c = 0; c < count; ++c) {
        const NeuronId n = scores[c].neuron;
        double worst = kInfNorm;
        for (SplitStatus s : {SplitStatus::Pos, SplitStatus::Neg}) {
            SplitSet splits = domain.splits;
            splits.set(n, s);
            PreActBounds bounds = domain.bounds;
            bounds.apply_split(n, s);
            if (bounds.contradictory()) continue;
            worst = std::min(worst, concretize(backward_bound(net, bounds, splits, probe, obj), region));
        }
        if (!best || worst > best_value) {
            best = n;
            best_value = worst;
        }
    }
    return best;
}

std::vector<Domain> batch_split(const std::vector<Domain>& domains, const std::vector<NeuronId>& choices) {
    if (domains.size() != choices.size()) throw BoundError("batch_split: one choice per domain required");
    std::vector<Domain> children;
    children.reserve(2 * domains.size());
    for (std::size_t i = 0; i < domains.size(); ++i) {
        const NeuronId n = choices[i];
        if (domains[i].splits.get(n) != SplitStatus::Free) throw BoundError("batch_split: neuron is already split");
        for (SplitStatus s : {SplitStatus::Pos, SplitStatus::Neg}) {
            Domain child = domains[i];
            child.splits.set(n, s);
            child.bounds.apply_split(n, s);
            auto zero_beta = [&](ParamGroup& g) {
                if (static_cast<std::size_t>(n.layer) < g.values.beta.size()) g.values.beta[n.layer][n.index] = 0.0;
            };
            zero_beta(child.params.output);
            for (auto& g : child.params.inter_lower) zero_beta(g);
            for (auto& g : child.params.inter_upper) zero_beta(g);
            child.params.reset_moments();
            child.depth = domains[i].depth + 1;
            child.infeasible = false;
            children.push_back(std::move(child));
        }
    }
    return children;
}

std::vector<Domain> domain_filter(std::vector<Domain> children, const std::vector<double>& parent_lower,
                                  double global_upper) {
    if (children.size() != parent_lower.size()) throw BoundError("domain_filter: one parent bound per child");
    std::vector<Domain> out;
    for (std::size_t i = 0; i < children.size(); ++i) {
        Domain& d = children[i];
        if (d.infeasible || d.lower >= 0.0 || d.lower > global_upper) continue;
        d.lower = std::max(d.lower, parent_lower[i]);
        out.push_back(std::move(d));
    }
    return out;
}

Verdict run_bab(const Network& net, const InputRegion& region, const BabConfig& cfg) {
    if (net.output_dim() != 1) throw DimensionError("run_bab needs a scalar-output network");
    region.validate();
    if (region.center.size() != net.input_dim()) throw DimensionError("run_bab: region and network input sizes differ");
    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

    Verdict v;
    double resolved_min = kInfNorm;  // smallest lower bound among domains dropped as verified
    std::vector<Entry> heap;
    std::vector<Domain> stuck;  // unresolved but impossible to branch on
    std::uint64_t seq = 0;

    auto observe_upper = [&](const Domain& d) {
        if (!d.infeasible && d.upper < v.global_upper) {
            v.global_upper = d.upper;
            v.counterexample = d.witness;
        }
    };
    auto refresh_lower = [&] {
        double lo = resolved_min;
        if (!heap.empty()) lo = std::min(lo, heap.front().lower);
        for (const Domain& d : stuck) lo = std::min(lo, d.lower);
        v.global_lower = lo;
    };
    auto insert = [&](std::vector<Domain> children, const std::vector<double>& parent_lower) {
        for (std::size_t i = 0; i < children.size(); ++i) {
            const Domain& d = children[i];
            if (!d.infeasible && d.lower >= 0.0) resolved_min = std::min(resolved_min, std::max(d.lower, parent_lower[i]));
        }
        for (Domain& d : domain_filter(std::move(children), parent_lower, v.global_upper)) {
            const double lower = d.lower;
            heap.push_back({lower, seq++, std::move(d)});
            std::push_heap(heap.begin(), heap.end(), heap_less);
        }
    };
    auto report = [&] {
        v.stats.wall_seconds = elapsed();
        if (cfg.on_progress) {
            cfg.on_progress({v.stats.wall_seconds, heap.size() + stuck.size(), v.stats.domains_visited, v.global_lower,
                             v.global_upper});
        }
    };

    {
        Domain root;
        root.splits = SplitSet(net);
        root.params = ParamState::initial(net);
        if (bound_domain(root, net, region, cfg, true)) ++v.stats.leaf_lps;
        ++v.stats.domains_visited;
        v.root_lower = root.lower;
        observe_upper(root);
        if (cfg.pgd_steps > 0 && cfg.pgd_restarts > 0 && std::isinf(region.p)) {
            AttackResult a = pgd_attack(net, region, cfg.pgd_steps, cfg.pgd_restarts, cfg.seed);
            if (a.value < v.global_upper) {
                v.global_upper = a.value;
                v.counterexample = a.witness;
            }
        }
        std::vector<Domain> first;
        first.push_back(std::move(root));
        insert(std::move(first), {-kInfNorm});
    }
    refresh_lower();
    report();

    auto keep_going = [&] {
        if (heap.empty()) return false;
        if (cfg.stop_on_falsified && v.global_upper < 0.0) return false;
        if (v.global_upper - v.global_lower <= cfg.delta) return false;
        if (heap.size() + stuck.size() >= cfg.max_domains) return false;
        return elapsed() < cfg.timeout_seconds;
    };

    while (keep_going()) {
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.batch, 1)), heap.size());
        std::vector<Domain> parents;
        std::vector<NeuronId> choices;
        for (std::size_t i = 0; i < n; ++i) {
            std::pop_heap(heap.begin(), heap.end(), heap_less);
            Domain d = std::move(heap.back().domain);
            heap.pop_back();
            std::optional<NeuronId> choice = cfg.branching == Branching::Fsb
                                                 ? fsb_branching(net, region, d, cfg.fsb_candidates)
                                                 : babsr_choice(net, d);
            if (!choice) {
                stuck.push_back(std::move(d));
                continue;
            }
            parents.push_back(std::move(d));
            choices.push_back(*choice);
        }
        std::vector<Domain> children = batch_split(parents, choices);
        std::vector<char> settled(children.size(), 0);
        parallel_for(children.size(), cfg.threads,
                     [&](std::size_t i) { settled[i] = bound_domain(children[i], net, region, cfg, false); });

        std::vector<double> parent_lower;
        for (std::size_t i = 0; i < children.size(); ++i) {
            parent_lower.push_back(parents[i / 2].lower);
            observe_upper(children[i]);
            v.stats.leaf_lps += static_cast<std::uint64_t>(settled[i]);
        }
        v.stats.domains_visited += children.size();
        v.stats.branches += parents.size();
        ++v.stats.iterations;
        insert(std::move(children), parent_lower);
        refresh_lower();
        report();
    }

    if (v.global_upper < 0.0) {
        v.status = VerdictStatus::Falsified;
    } else if (heap.empty() && stuck.empty()) {
        v.status = VerdictStatus::Verified;
        v.counterexample.reset();
    } else {
        v.status = VerdictStatus::Unknown;
        v.counterexample.reset();
    }
    v.stats.wall_seconds = elapsed();
    return v;
}

} // namespace bcrown
