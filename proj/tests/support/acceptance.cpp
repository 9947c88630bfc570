#include "acceptance.hpp"

#include "instances.hpp"
#include "reference_crown.hpp"

#include "bcrown/bab.hpp"
#include "bcrown/cli.hpp"
#include "bcrown/optimizer.hpp"
#include "bcrown/oracle.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include <unistd.h>

namespace bcrown::acceptance {

namespace {

using testing::calibrated_instance;
using testing::random_network;
using testing::random_params;
using testing::random_region;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string format(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

CriterionResult verdict(bool ok, std::string detail) { return {0, {}, ok, std::move(detail), 0.0}; }

// Random scalar net with `hidden` hidden layers of random width in [2, max_width].
Network random_depth_network(std::mt19937_64& rng, int input, int hidden, int max_width) {
    std::uniform_int_distribution<int> width(2, max_width);
    std::vector<int> widths{input};
    for (int h = 0; h < hidden; ++h) widths.push_back(width(rng));
    widths.push_back(1);
    return random_network(rng, widths);
}

// Random split set on `net` whose interval bounds are consistent and whose LP is feasible.
struct SplitInstance {
    Network net;
    InputRegion region;
    SplitSet splits;
    PreActBounds bounds;
};

SplitInstance feasible_split_instance(std::mt19937_64& rng, const std::vector<int>& widths, double eps,
                                      double split_probability) {
    while (true) {
        Network net = random_network(rng, widths);
        InputRegion region = random_region(rng, widths.front(), eps);
        SplitSet splits = testing::random_splits(rng, net, region, split_probability);
        PreActBounds bounds = interval_bounds(net, region, &splits);
        if (bounds.contradictory()) continue;
        if (lp_relaxation_min(net, region, bounds, splits).infeasible) continue;
        return {std::move(net), std::move(region), std::move(splits), std::move(bounds)};
    }
}

CriterionResult relaxation_sampling() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int width = 8;
    long violations = 0;
    double worst = 0.0;
    for (int config = 0; config < 100; ++config) {
        Vector l(width), u(width), w(width), alpha(width);
        for (int j = 0; j < width; ++j) {
            double a = 2.0 * normal(rng), b = 2.0 * normal(rng);
            l[j] = std::min(a, b);
            u[j] = std::max(a, b);
            w[j] = normal(rng);
            alpha[j] = unif(rng);
        }
        std::vector<SplitStatus> status(width, SplitStatus::Free);
        RelaxCoeffs rc = relu_layer_relaxation(l, u, status, w, alpha);
        for (int s = 0; s < 100000; ++s) {
            double lhs = 0.0, rhs = 0.0;
            for (int j = 0; j < width; ++j) {
                const double v = l[j] + (u[j] - l[j]) * unif(rng);
                lhs += w[j] * std::max(v, 0.0);
                rhs += w[j] * (rc.slope[j] * v + rc.intercept[j]);
            }
            if (lhs < rhs - 1e-9) ++violations;
            worst = std::max(worst, rhs - lhs);
        }
    }
    const double secs = seconds_since(t0);
    return verdict(violations == 0 && secs < 10.0,
                   format("violations=%ld max(rhs-lhs)=%.3g time=%.2fs", violations, worst, secs));
}

CriterionResult crown_reduction() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1002);
    std::uniform_int_distribution<int> depth(2, 3), input(2, 4);
    std::uniform_real_distribution<double> eps(0.05, 1.0);
    double worst_diff = 0.0, worst_ibp = 0.0;
    int ibp_fail = 0, raw_below = 0;
    for (int t = 0; t < 100; ++t) {
        Network net = random_depth_network(rng, input(rng), depth(rng), 8);
        InputRegion region = random_region(rng, net.input_dim(), eps(rng));
        SplitSet splits(net);
        PreActBounds bounds = compute_intermediate_bounds(net, region, splits, ParamState::initial(net));
        const Objective obj = Objective::output(net);

        RelaxParams params = RelaxParams::initial(net, net.num_hidden());
        const double ours = concretize(backward_bound(net, bounds, splits, params, obj), region);
        const double ref = testing::reference_crown(net, region.center, region.epsilon, bounds.lower, bounds.upper,
                                                    params.alpha);
        worst_diff = std::max(worst_diff, std::abs(ours - ref));

        RelaxParams random_alpha = random_params(rng, net, splits);
        const double ours_a = concretize(backward_bound(net, bounds, splits, random_alpha, obj), region);
        const double ref_a = testing::reference_crown(net, region.center, region.epsilon, bounds.lower,
                                                      bounds.upper, random_alpha.alpha);
        worst_diff = std::max(worst_diff, std::abs(ours_a - ref_a));

        // The verifier's beta = 0 bound: no ascent steps, alpha = 1, beta = 0 everywhere.
        PreActBounds ib = interval_bounds(net, region);
        const double ibp = testing::reference_interval_output(net, ib.lower.back(), ib.upper.back());
        ParamState state = ParamState::initial(net);
        JointConfig no_steps;
        no_steps.ascent.iters = 0;
        const double pipeline = joint_optimize(net, region, splits, state, no_steps).bound;
        if (pipeline < ibp - 1e-12) ++ibp_fail;
        if (ours < ibp - 1e-12) ++raw_below;
        worst_ibp = std::max(worst_ibp, ibp - pipeline);
    }
    const double secs = seconds_since(t0);
    return verdict(worst_diff <= 1e-12 && ibp_fail == 0 && secs < 10.0,
                   format("max|beta0-crown|=%.3g below_interval=%d (raw backward pass below interval on %d) "
                          "time=%.2fs",
                          worst_diff, ibp_fail, raw_below, secs));
}

CriterionResult weak_duality() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1003);
    std::uniform_real_distribution<double> scale(0.0, 3.0);
    int violations = 0, checked = 0;
    double worst = -kInfNorm;
    for (int t = 0; t < 50; ++t) {
        SplitInstance inst = feasible_split_instance(rng, {2, 4, 4, 1}, 0.5, 0.4);
        const double lp = lp_relaxation_min(inst.net, inst.region, inst.bounds, inst.splits).value;
        for (int s = 0; s < 20; ++s) {
            RelaxParams p = random_params(rng, inst.net, inst.splits, scale(rng));
            const double g = concretize(
                backward_bound(inst.net, inst.bounds, inst.splits, p, Objective::output(inst.net)), inst.region);
            worst = std::max(worst, g - lp);
            if (g > lp + 1e-6) ++violations;
            ++checked;
        }
    }
    const double secs = seconds_since(t0);
    return verdict(violations == 0 && secs < 60.0,
                   format("checked=%d violations=%d max(g-lp)=%.3g time=%.2fs", checked, violations, worst, secs));
}

CriterionResult strong_duality() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1004);
    int close = 0, negative = 0;
    double worst_gap = 0.0, most_negative = 0.0;
    for (int t = 0; t < 50; ++t) {
        SplitInstance inst = feasible_split_instance(rng, {2, 3, 3, 1}, 0.5, 0.3);
        const double lp = lp_relaxation_min(inst.net, inst.region, inst.bounds, inst.splits).value;
        AscentConfig cfg;
        cfg.iters = 500;
        cfg.line_search = LineSearchMode::On;
        ParamGroup group = ParamGroup::initial(inst.net, inst.net.num_hidden());
        const double g = ascend(inst.net, inst.region, inst.bounds, inst.splits, group, cfg).best;
        const double gap = lp - g;
        if (std::abs(gap) <= 1e-3 * std::max(1.0, std::abs(lp))) ++close;
        if (gap < -1e-6) ++negative;
        worst_gap = std::max(worst_gap, gap);
        most_negative = std::min(most_negative, gap);
    }
    const double secs = seconds_since(t0);
    return verdict(close >= 48 && negative == 0 && secs < 300.0,
                   format("within_tol=%d/50 negative_gaps=%d max_gap=%.3g min_gap=%.3g time=%.2fs", close, negative,
                          worst_gap, most_negative, secs));
}

CriterionResult full_split_exactness() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1005);
    int exact = 0;
    double worst = 0.0;
    for (int t = 0; t < 30;) {
        Network net = random_network(rng, {2, 4, 4, 1});
        InputRegion region = random_region(rng, 2, 0.5);
        auto [splits, bounds] = testing::split_everything(rng, net, region);
        if (bounds.contradictory()) continue;
        ExactResult oracle = exact_min(net, region, splits);
        if (oracle.empty) continue;
        ++t;
        const double lp = lp_relaxation_min(net, region, bounds, splits).value;
        AscentConfig cfg;
        cfg.iters = 500;
        ParamGroup group = ParamGroup::initial(net, net.num_hidden());
        const double g = ascend(net, region, bounds, splits, group, cfg).best;
        const double err = std::max({std::abs(g - lp), std::abs(lp - oracle.min_value), std::abs(g - oracle.min_value)});
        worst = std::max(worst, err);
        if (err <= 1e-6) ++exact;
    }
    const double secs = seconds_since(t0);
    return verdict(exact == 30 && secs < 60.0,
                   format("matching=%d/30 max_err=%.3g time=%.2fs", exact, worst, secs));
}

bool verdict_matches(const Verdict& v, const Network& net, const InputRegion& region, double exact) {
    if (exact > 0.0) return v.status == VerdictStatus::Verified;
    if (v.status != VerdictStatus::Falsified || !v.counterexample) return false;
    const Vector& x = *v.counterexample;
    return testing::in_box(region, x) && forward_eval(net, x) < 0.0;
}

CriterionResult completeness() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1006);
    int matched[2] = {0, 0};
    int robust = 0;
    double slowest = 0.0;
    for (int t = 0; t < 100; ++t) {
        testing::Instance inst = calibrated_instance(rng, {2, 4, 4, 1}, 0.5);
        robust += inst.exact > 0.0;
        for (int b = 0; b < 2; ++b) {
            BabConfig cfg;
            cfg.branching = b == 0 ? Branching::Babsr : Branching::Fsb;
            const auto ti = Clock::now();
            Verdict v = run_bab(inst.net, inst.region, cfg);
            const double secs = seconds_since(ti);
            slowest = std::max(slowest, secs);
            if (secs < 10.0 && verdict_matches(v, inst.net, inst.region, inst.exact)) ++matched[b];
        }
    }
    const double secs = seconds_since(t0);
    return verdict(matched[0] == 100 && matched[1] == 100,
                   format("babsr=%d/100 fsb=%d/100 robust=%d slowest=%.3fs time=%.2fs", matched[0], matched[1], robust,
                          slowest, secs));
}

CriterionResult gradient_check() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1007);
    const double h = 1e-5;
    double worst = 0.0;
    int coords = 0;
    for (int t = 0; t < 20; ++t) {
        SplitInstance inst = feasible_split_instance(rng, {2, 3, 3, 1}, 0.5, 0.5);
        RelaxParams p = random_params(rng, inst.net, inst.splits);
        const Objective obj = Objective::output(inst.net);
        auto value = [&](const RelaxParams& q) {
            return concretize(backward_bound(inst.net, inst.bounds, inst.splits, q, obj), inst.region);
        };
        BoundGradient g = gradient(inst.net, inst.region, inst.bounds, inst.splits, p);
        auto check = [&](std::vector<Vector> RelaxParams::*field, const std::vector<Vector>& grad) {
            for (std::size_t l = 0; l < (p.*field).size(); ++l) {
                for (Eigen::Index j = 0; j < (p.*field)[l].size(); ++j) {
                    RelaxParams plus = p, minus = p;
                    (plus.*field)[l][j] += h;
                    (minus.*field)[l][j] -= h;
                    const double fd = (value(plus) - value(minus)) / (2.0 * h);
                    const double err = std::abs(grad[l][j] - fd) / std::max({std::abs(fd), std::abs(grad[l][j]), 1e-6});
                    worst = std::max(worst, err);
                    ++coords;
                }
            }
        };
        check(&RelaxParams::alpha, g.grad.alpha);
        check(&RelaxParams::beta, g.grad.beta);
    }
    const double secs = seconds_since(t0);
    return verdict(worst <= 1e-4, format("coords=%d max_rel_err=%.3g time=%.2fs", coords, worst, secs));
}

CriterionResult anytime() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1008);
    const double budgets[] = {0.0, 0.01, 0.1, 1.0, 10.0};
    int monotone_fail = 0, open_at_root = 0, improved = 0;
    for (int t = 0; t < 50; ++t) {
        testing::Instance inst = calibrated_instance(rng, {3, 8, 8, 1}, 0.4);
        double previous = -kInfNorm;
        double root = 0.0, last = 0.0;
        for (double budget : budgets) {
            BabConfig cfg;
            cfg.stop_on_falsified = false;
            cfg.timeout_seconds = budget;
            Verdict v = run_bab(inst.net, inst.region, cfg);
            if (v.global_lower < previous) ++monotone_fail;
            previous = v.global_lower;
            if (budget == 0.0) root = v.global_lower;
            last = v.global_lower;
        }
        if (root < 0.0) {
            ++open_at_root;
            if (last > root) ++improved;
        }
    }
    const double secs = seconds_since(t0);
    const bool enough = open_at_root == 0 || improved >= 0.8 * open_at_root;
    return verdict(monotone_fail == 0 && enough,
                   format("monotonicity_violations=%d improved=%d/%d time=%.2fs", monotone_fail, improved,
                          open_at_root, secs));
}

CriterionResult joint_tightening() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1009);
    double best_margin = -kInfNorm;
    int tried = 0;
    for (; tried < 200 && best_margin < 1e-3; ++tried) {
        Network net = random_network(rng, {2, 5, 5, 1});
        InputRegion region = random_region(rng, 2, 0.5);
        SplitSet splits(net);
        const double lp = lp_relaxation_min(net, region, interval_bounds(net, region), splits).value;
        ParamState state = ParamState::initial(net);
        JointConfig cfg;
        const double joint = joint_optimize(net, region, splits, state, cfg).bound;
        best_margin = std::max(best_margin, joint - lp);
    }
    const double secs = seconds_since(t0);
    return verdict(best_margin >= 1e-3,
                   format("joint-lp_interval=%.4g after %d candidates time=%.2fs", best_margin, tried, secs));
}

CriterionResult infeasibility_pruning() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1010);
    const int wanted = 200;
    int pruned = 0, built = 0, unsound = 0, fully = 0;
    while (built < wanted) {
        Network net = random_network(rng, {2, 4, 4, 1});
        InputRegion region = random_region(rng, 2, 0.5);
        SplitSet splits = testing::random_splits(rng, net, region, 0.8);
        PreActBounds bounds = interval_bounds(net, region, &splits);
        if (bounds.contradictory()) continue;  // emptiness visible without any ascent
        if (!lp_relaxation_min(net, region, bounds, splits).infeasible) continue;
        if (!exact_min(net, region, splits).empty) {
            ++unsound;  // the LP claims emptiness of a nonempty domain
            continue;
        }
        ++built;
        fully += fully_split(bounds, splits, net.num_layers() - 1);
        const double upper = pgd_attack(net, region, 50, 2, 0).value;
        ParamGroup group = ParamGroup::initial(net, net.num_hidden());
        const double bound = ascend(net, region, bounds, splits, group, AscentConfig{}).best;
        if (std::isnan(bound)) ++unsound;
        else if (bound > upper) ++pruned;
    }
    const double secs = seconds_since(t0);
    return verdict(pruned >= 0.9 * wanted && unsound == 0,
                   format("pruned=%d/%d (fully split: %d) unsound=%d time=%.2fs", pruned, built, fully, unsound,
                          secs));
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

CriterionResult determinism() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1011);
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / format("bcrown-determinism-%lld", static_cast<long long>(::getpid()));
    std::filesystem::create_directories(dir);
    Network net = random_network(rng, {3, 8, 8, 3});
    save_network(net, dir / "model.json");
    {
        std::ofstream prop(dir / "property.json");
        prop << R"({"x0": [0.1, -0.2, 0.3], "epsilon": 0.3, "p": "inf",)"
             << R"( "spec_rows": [[1, -1, 0], [1, 0, -1], [0, 1, -1]], "spec_consts": [0.5, 0.5, 0.2]})";
    }
    std::string reports[2], logs[2];
    int codes[2];
    for (int run = 0; run < 2; ++run) {
        cli::RunConfig rc;
        rc.model = dir / "model.json";
        rc.property = dir / "property.json";
        rc.threads = 1;
        rc.seed = 7;
        rc.report = dir / format("report%d.json", run);
        rc.log = dir / format("log%d.csv", run);
        std::ostringstream out, err;
        codes[run] = cli::run(rc, out, err);
        reports[run] = slurp(rc.report);
        logs[run] = slurp(rc.log);
    }
    std::filesystem::remove_all(dir);
    const bool same = reports[0] == reports[1] && logs[0] == logs[1] && !reports[0].empty() && !logs[0].empty();
    const double secs = seconds_since(t0);
    return verdict(same && codes[0] == codes[1] && codes[0] <= cli::kUnknown,
                   format("identical=%s exit=%d report_bytes=%zu log_bytes=%zu time=%.2fs", same ? "yes" : "no",
                          codes[0], reports[0].size(), logs[0].size(), secs));
}

} // namespace

std::vector<Criterion> criteria() {
    return {
        {1, "relaxation sampling", relaxation_sampling},
        {2, "plain bound reduction", crown_reduction},
        {3, "weak duality", weak_duality},
        {4, "dual matches LP", strong_duality},
        {5, "full-split exactness", full_split_exactness},
        {6, "completeness", completeness},
        {7, "gradient check", gradient_check},
        {8, "anytime improvement", anytime},
        {9, "joint tightening", joint_tightening},
        {10, "infeasibility pruning", infeasibility_pruning},
        {11, "determinism", determinism},
    };
}

bool run_all(std::ostream& out) {
    bool all = true;
    for (const Criterion& c : criteria()) {
        const auto t0 = Clock::now();
        CriterionResult r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r = verdict(false, std::string("exception: ") + e.what());
        }
        r.id = c.id;
        r.name = c.name;
        r.seconds = seconds_since(t0);
        all = all && r.passed;
        out << (r.passed ? "PASS" : "FAIL") << "  criterion " << r.id << " (" << r.name << "): " << r.detail
            << std::endl;
    }
    return all;
}

} // namespace bcrown::acceptance
