#ifndef BCROWN_SIMPLEX_HPP
#define BCROWN_SIMPLEX_HPP

#include "bcrown/model.hpp"

#include <stdexcept>

namespace bcrown {

/** The LP solver hit a state it cannot resolve (unbounded, pivot cap, failed re-check). */
class LPError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * minimize objective^T x
 *   s.t. ineq_coeffs x <= ineq_rhs
 *        eq_coeffs x   == eq_rhs
 *        lower <= x <= upper   (entries may be +-inf)
 */
struct LPProblem {
    Vector objective;
    Matrix ineq_coeffs;
    Vector ineq_rhs;
    Matrix eq_coeffs;
    Vector eq_rhs;
    Vector lower;
    Vector upper;

    /// Empty problem with `n` free variables and zero objective.
    static LPProblem with_variables(Eigen::Index n);

    Eigen::Index num_vars() const { return objective.size(); }
    void add_inequality(const Vector& row, double rhs);
    void add_equality(const Vector& row, double rhs);
    void validate() const;
};

enum class LPStatus { Optimal, Infeasible };

struct LPSolution {
    LPStatus status = LPStatus::Infeasible;
    double value = 0.0;
    Vector x;
    long pivots = 0;
};

/**
 * Two-phase dense tableau simplex with Bland's smallest-index rule. The
 * returned point is re-checked against every constraint.
 */
LPSolution simplex_solve(const LPProblem& lp);

} // namespace bcrown

#endif
