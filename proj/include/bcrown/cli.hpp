#ifndef BCROWN_CLI_HPP
#define BCROWN_CLI_HPP

#include "bcrown/bab.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

namespace bcrown::cli {

enum class Mode { Verify, Bound, Attack, Oracle, Selftest };

/// Process exit codes.
enum ExitCode : int {
    kAllVerified = 0,
    kFalsified = 1,
    kUnknown = 2,
    kInputError = 3,
    kOracleGuard = 4,
};

struct RunConfig {
    std::filesystem::path model;
    std::filesystem::path property;
    Mode mode = Mode::Verify;

    int batch = 8;
    double delta = 1e-6;
    std::uint64_t eta = 1'000'000;
    double timeout = kInfNorm;
    Branching branching = Branching::Babsr;

    int iters = 20;
    double lr_alpha = 0.1;
    double lr_beta = 0.05;
    double decay = 0.98;

    std::uint64_t seed = 0;
    int threads = 1;

    int pgd_steps = 200;
    int pgd_restarts = 5;

    std::filesystem::path report;  // JSON report; empty = none
    std::filesystem::path log;     // CSV anytime log; empty = none

    /// Single-threaded runs zero every wall-clock field so outputs are reproducible.
    bool deterministic() const { return threads == 1; }
};

/// Runs the acceptance suite, printing one line per criterion; returns true when all pass.
using SelftestFn = std::function<bool(std::ostream&)>;

/** Executes one configured run; human-readable output goes to `out`, errors to `err`. */
int run(const RunConfig& config, std::ostream& out, std::ostream& err, const SelftestFn& selftest = {});

/**
 * Parses command-line flags (VERIFIER_THREADS is the --threads fallback) and
 * runs. Usage errors exit with kInputError.
 */
int main(int argc, char** argv, const SelftestFn& selftest = {});

} // namespace bcrown::cli

#endif
