#include "bcrown/cli.hpp"

#include "bcrown/oracle.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <thread>

namespace bcrown::cli {

namespace {

using json = nlohmann::ordered_json;

const char* mode_name(Mode m) {
    switch (m) {
    case Mode::Verify: return "verify";
    case Mode::Bound: return "bound";
    case Mode::Attack: return "attack";
    case Mode::Oracle: return "oracle";
    case Mode::Selftest: return "selftest";
    }
    return "verify";
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json vec_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

// Infinite values have no JSON literal; they are written as null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

bool in_region(const InputRegion& region, const Vector& x) {
    if (x.size() != region.center.size()) return false;
    if (std::isinf(region.p)) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (x[i] < region.center[i] - region.epsilon || x[i] > region.center[i] + region.epsilon) return false;
        }
        return true;
    }
    const double norm = std::pow((x - region.center).array().abs().pow(region.p).sum(), 1.0 / region.p);
    return norm <= region.epsilon * (1.0 + 1e-12);
}

class CsvLog {
public:
    explicit CsvLog(const std::filesystem::path& path, bool zero_clock) : zero_clock_(zero_clock) {
        if (path.empty()) return;
        file_ = std::make_unique<std::ofstream>(path);
        if (!*file_) throw std::runtime_error("cannot open log file " + path.string());
        *file_ << "row,wall_seconds,domains_live,domains_visited,global_lower,global_upper\n" << std::flush;
    }

    std::function<void(const BabProgress&)> sink(int row) {
        if (!file_) return {};
        return [this, row](const BabProgress& p) {
            *file_ << row << ',' << fmt(zero_clock_ ? 0.0 : p.wall_seconds) << ',' << p.domains_live << ','
                   << p.domains_visited << ',' << fmt(p.global_lower) << ',' << fmt(p.global_upper) << '\n'
                   << std::flush;
        };
    }

private:
    bool zero_clock_;
    std::unique_ptr<std::ofstream> file_;
};

BabConfig bab_config(const RunConfig& rc) {
    BabConfig c;
    c.batch = rc.batch;
    c.delta = rc.delta;
    c.max_domains = rc.eta;
    c.timeout_seconds = rc.timeout;
    c.branching = rc.branching;
    c.child.iters = rc.iters;
    c.child.lr_alpha = rc.lr_alpha;
    c.child.lr_beta = rc.lr_beta;
    c.child.decay = rc.decay;
    c.root.ascent = c.child;
    c.pgd_steps = rc.pgd_steps;
    c.pgd_restarts = rc.pgd_restarts;
    c.seed = rc.seed;
    c.threads = rc.threads;
    return c;
}

int exit_for(const std::vector<VerdictStatus>& statuses) {
    bool unknown = false;
    for (VerdictStatus s : statuses) {
        if (s == VerdictStatus::Falsified) return kFalsified;
        unknown = unknown || s == VerdictStatus::Unknown;
    }
    return unknown ? kUnknown : kAllVerified;
}

json config_json(const RunConfig& rc) {
    json c;
    c["batch"] = rc.batch;
    c["delta"] = rc.delta;
    c["eta"] = rc.eta;
    c["timeout"] = num(rc.timeout);
    c["branching"] = rc.branching == Branching::Fsb ? "fsb" : "babsr";
    c["iters"] = rc.iters;
    c["lr_alpha"] = rc.lr_alpha;
    c["lr_beta"] = rc.lr_beta;
    c["decay"] = rc.decay;
    c["seed"] = rc.seed;
    c["threads"] = rc.threads;
    return c;
}

struct RowOutcome {
    VerdictStatus status;
    json record;
};

RowOutcome bab_row(const RunConfig& rc, const Network& net, const InputRegion& region, int row, CsvLog& log,
                   std::ostream& out) {
    BabConfig cfg = bab_config(rc);
    cfg.on_progress = log.sink(row);
    const bool bound_mode = rc.mode == Mode::Bound;
    if (bound_mode) cfg.stop_on_falsified = false;
    Verdict v = run_bab(net, region, cfg);

    json r;
    r["row"] = row;
    r["status"] = to_string(v.status);
    r["global_lower"] = num(v.global_lower);
    r["global_upper"] = num(v.global_upper);
    r["root_lower"] = num(v.root_lower);
    if (v.counterexample) {
        const double value = forward_eval(net, *v.counterexample);
        r["counterexample"] = vec_json(*v.counterexample);
        r["counterexample_value"] = value;
        r["counterexample_valid"] = value < 0.0 && in_region(region, *v.counterexample);
    } else {
        r["counterexample"] = nullptr;
    }
    if (bound_mode) {
        if (std::isinf(region.p) && rc.pgd_steps > 0 && rc.pgd_restarts > 0) {
            AttackResult a = pgd_attack(net, region, rc.pgd_steps, rc.pgd_restarts, rc.seed);
            r["pgd_upper"] = a.value;
            r["pgd_witness"] = vec_json(a.witness);
        } else {
            r["pgd_upper"] = nullptr;
        }
    }
    r["branches"] = v.stats.branches;
    r["domains_visited"] = v.stats.domains_visited;
    r["iterations"] = v.stats.iterations;
    r["leaf_lps"] = v.stats.leaf_lps;
    r["wall_seconds"] = rc.deterministic() ? 0.0 : v.stats.wall_seconds;

    out << "row " << row << ": " << to_string(v.status) << " lower=" << fmt(v.global_lower)
        << " upper=" << fmt(v.global_upper) << " branches=" << v.stats.branches;
    if (bound_mode && r.contains("pgd_upper") && !r["pgd_upper"].is_null())
        out << " pgd_upper=" << fmt(r["pgd_upper"].get<double>());
    out << '\n';
    if (v.status == VerdictStatus::Falsified && v.counterexample) {
        out << "  counterexample:";
        for (Eigen::Index i = 0; i < v.counterexample->size(); ++i) out << ' ' << fmt((*v.counterexample)[i]);
        out << "  f=" << fmt(r["counterexample_value"].get<double>()) << '\n';
    }
    return {v.status, std::move(r)};
}

RowOutcome attack_row(const RunConfig& rc, const Network& net, const InputRegion& region, int row,
                      std::ostream& out) {
    if (!std::isinf(region.p)) throw ModelError("attack mode supports p = inf only");
    AttackResult a = pgd_attack(net, region, rc.pgd_steps, rc.pgd_restarts, rc.seed);
    const VerdictStatus status = a.value < 0.0 ? VerdictStatus::Falsified : VerdictStatus::Unknown;
    json r;
    r["row"] = row;
    r["status"] = to_string(status);
    r["value"] = a.value;
    r["witness"] = vec_json(a.witness);
    out << "row " << row << ": attack value=" << fmt(a.value) << " witness:";
    for (Eigen::Index i = 0; i < a.witness.size(); ++i) out << ' ' << fmt(a.witness[i]);
    out << '\n';
    return {status, std::move(r)};
}

RowOutcome oracle_row(const Network& net, const InputRegion& region, int row, std::ostream& out) {
    ExactResult e = exact_min(net, region, SplitSet(net));
    json r;
    r["row"] = row;
    r["patterns"] = e.patterns;
    VerdictStatus status = VerdictStatus::Verified;
    if (e.empty) {
        r["min_value"] = nullptr;
        r["argmin"] = nullptr;
        out << "row " << row << ": oracle found no feasible pattern\n";
    } else {
        if (e.min_value < 0.0) status = VerdictStatus::Falsified;
        else if (e.min_value <= 0.0) status = VerdictStatus::Unknown;
        r["min_value"] = e.min_value;
        r["argmin"] = vec_json(e.argmin);
        out << "row " << row << ": exact min=" << fmt(e.min_value) << " argmin:";
        for (Eigen::Index i = 0; i < e.argmin.size(); ++i) out << ' ' << fmt(e.argmin[i]);
        out << '\n';
    }
    r["status"] = to_string(status);
    return {status, std::move(r)};
}

void write_report(const RunConfig& rc, const json& report) {
    if (rc.report.empty()) return;
    std::ofstream f(rc.report);
    if (!f) throw std::runtime_error("cannot open report file " + rc.report.string());
    f << report.dump(2) << '\n';
}

} // namespace

int run(const RunConfig& rc, std::ostream& out, std::ostream& err, const SelftestFn& selftest) {
    if (rc.mode == Mode::Selftest) {
        if (!selftest) {
            err << "selftest is not available in this build\n";
            return kUnknown;
        }
        return selftest(out) ? kAllVerified : kFalsified;
    }

    Network raw;
    Property prop;
    try {
        raw = load_network(rc.model);
        prop = load_property(rc.property);
        if (prop.region.center.size() != raw.input_dim())
            throw DimensionError("property x0 has " + std::to_string(prop.region.center.size()) +
                                 " entries but the network expects " + std::to_string(raw.input_dim()));
        if (prop.spec.coeffs.cols() != raw.output_dim())
            throw DimensionError("spec_rows have " + std::to_string(prop.spec.coeffs.cols()) +
                                 " columns but the network has " + std::to_string(raw.output_dim()) + " outputs");
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }

    try {
        CsvLog log(rc.mode == Mode::Verify || rc.mode == Mode::Bound ? rc.log : std::filesystem::path{},
                   rc.deterministic());
        json report;
        report["mode"] = mode_name(rc.mode);
        report["model"] = rc.model.string();
        report["property"] = rc.property.string();
        report["config"] = config_json(rc);
        report["rows"] = json::array();
        std::vector<VerdictStatus> statuses;
        for (int row = 0; row < prop.spec.num_rows(); ++row) {
            Network net = merge_specification(raw, prop.spec.coeffs.row(row).transpose(), prop.spec.consts[row]);
            RowOutcome o;
            switch (rc.mode) {
            case Mode::Attack: o = attack_row(rc, net, prop.region, row, out); break;
            case Mode::Oracle: o = oracle_row(net, prop.region, row, out); break;
            default: o = bab_row(rc, net, prop.region, row, log, out); break;
            }
            statuses.push_back(o.status);
            report["rows"].push_back(std::move(o.record));
        }
        const int code = exit_for(statuses);
        report["exit_code"] = code;
        write_report(rc, report);
        return code;
    } catch (const OracleGuardError& e) {
        err << "error: " << e.what() << '\n';
        return kOracleGuard;
    } catch (const ModelError& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::ios_base::failure& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::runtime_error& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
}

int main(int argc, char** argv, const SelftestFn& selftest) {
    RunConfig rc;
    CLI::App app{"Branch-and-bound robustness verifier for ReLU networks"};
    app.option_defaults()->always_capture_default();

    const std::map<std::string, Mode> modes{{"verify", Mode::Verify},
                                            {"bound", Mode::Bound},
                                            {"attack", Mode::Attack},
                                            {"oracle", Mode::Oracle},
                                            {"selftest", Mode::Selftest}};
    const std::map<std::string, Branching> branchings{{"babsr", Branching::Babsr}, {"fsb", Branching::Fsb}};
    std::string model, property, report, log;
    int threads = 0;

    app.add_option("--model", model, "Network JSON file");
    app.add_option("--property", property, "Property JSON file");
    app.add_option("--mode", rc.mode, "verify | bound | attack | oracle | selftest")
        ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
    app.add_option("--batch", rc.batch, "Domains bounded per iteration")->check(CLI::PositiveNumber);
    app.add_option("--delta", rc.delta, "Stop when upper - lower <= delta")->check(CLI::NonNegativeNumber);
    app.add_option("--eta", rc.eta, "Maximum number of live domains")->check(CLI::PositiveNumber);
    app.add_option("--timeout", rc.timeout, "Wall-clock budget per spec row in seconds")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--branching", rc.branching, "babsr | fsb")
        ->transform(CLI::CheckedTransformer(branchings, CLI::ignore_case));
    app.add_option("--iters", rc.iters, "Ascent iterations per bound")->check(CLI::NonNegativeNumber);
    app.add_option("--lr-alpha", rc.lr_alpha, "Step size for alpha")->check(CLI::PositiveNumber);
    app.add_option("--lr-beta", rc.lr_beta, "Step size for beta")->check(CLI::PositiveNumber);
    app.add_option("--decay", rc.decay, "Per-iteration step size decay")->check(CLI::Range(0.0, 1.0));
    app.add_option("--seed", rc.seed, "Seed for the attack restarts");
    app.add_option("--threads", threads, "Worker threads; 1 gives reproducible output")
        ->check(CLI::PositiveNumber);
    app.add_option("--report", report, "Write a JSON report here");
    app.add_option("--log", log, "Write the CSV anytime log here");

    try {
        app.parse(argc, argv);
        if (threads == 0) {
            if (const char* env = std::getenv("VERIFIER_THREADS")) {
                try {
                    threads = std::stoi(env);
                } catch (const std::exception&) {
                    threads = 0;
                }
                if (threads < 1) throw CLI::ValidationError("VERIFIER_THREADS", "must be a positive integer");
            } else {
                threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
            }
        }
        if (rc.mode != Mode::Selftest && (model.empty() || property.empty()))
            throw CLI::RequiredError("--model and --property");
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kInputError;
    }
    rc.threads = threads;
    rc.model = model;
    rc.property = property;
    rc.report = report;
    rc.log = log;
    return run(rc, std::cout, std::cerr, selftest);
}

} // namespace bcrown::cli
