#include "bcrown/simplex.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace bcrown {

namespace {

constexpr long kMaxPivots = 1'000'000;
constexpr double kPivotTol = 1e-12;
constexpr double kCostTol = 1e-10;

enum class VarKind { Shift, Flip, Split };

struct VarMap {
    VarKind kind;
    double offset;  // lo for Shift, hi for Flip
    int col;        // first standard-form column
};

class Tableau {
public:
    Tableau(int rows, int cols) : m_(rows), n_(cols), t_(rows + 1, cols + 1), basis_(rows, -1) { t_.setZero(); }

    double& at(int r, int c) { return t_(r, c); }
    double rhs(int r) const { return t_(r, n_); }
    double& rhs(int r) { return t_(r, n_); }
    double& cost(int c) { return t_(m_, c); }
    double objective_value() const { return -t_(m_, n_); }
    int rows() const { return m_; }
    int cols() const { return n_; }
    std::vector<int>& basis() { return basis_; }

    void pivot(int r, int c) {
        t_.row(r) /= t_(r, c);
        for (int i = 0; i <= m_; ++i) {
            if (i == r) continue;
            double f = t_(i, c);
            if (f != 0.0) t_.row(i) -= f * t_.row(r);
        }
        basis_[r] = c;
        ++pivots_;
        if (pivots_ > kMaxPivots) throw LPError("simplex: pivot limit exceeded");
    }

    void set_costs(const Vector& costs) {
        t_.row(m_).setZero();
        for (int j = 0; j < n_; ++j) t_(m_, j) = costs[j];
        for (int i = 0; i < m_; ++i) {
            double cb = costs[basis_[i]];
            if (cb != 0.0) t_.row(m_) -= cb * t_.row(i);
        }
    }

    // Bland's rule; returns false when optimal.
    bool step(const std::vector<bool>& allowed) {
        int enter = -1;
        for (int j = 0; j < n_; ++j) {
            if (allowed[j] && t_(m_, j) < -kCostTol) {
                enter = j;
                break;
            }
        }
        if (enter < 0) return false;
        int leave = -1;
        double best_ratio = std::numeric_limits<double>::infinity();
        for (int i = 0; i < m_; ++i) {
            double a = t_(i, enter);
            if (a <= kPivotTol) continue;
            double ratio = t_(i, n_) / a;
            if (leave < 0 || ratio < best_ratio - 1e-12 ||
                (std::abs(ratio - best_ratio) <= 1e-12 && basis_[i] < basis_[leave])) {
                leave = i;
                best_ratio = ratio;
            }
        }
        if (leave < 0) throw LPError("simplex: problem is unbounded");
        pivot(leave, enter);
        return true;
    }

    long pivots() const { return pivots_; }

private:
    int m_;
    int n_;
    Matrix t_;
    std::vector<int> basis_;
    long pivots_ = 0;
};

void check_solution(const LPProblem& lp, const Vector& x) {
    auto tol = [](double rhs, const Vector& row, const Vector& xv) {
        return 1e-9 * (1.0 + std::abs(rhs) + row.cwiseAbs().dot(xv.cwiseAbs()));
    };
    for (Eigen::Index r = 0; r < lp.ineq_coeffs.rows(); ++r) {
        Vector row = lp.ineq_coeffs.row(r).transpose();
        if (row.dot(x) > lp.ineq_rhs[r] + tol(lp.ineq_rhs[r], row, x)) {
            throw LPError("simplex: returned point violates inequality " + std::to_string(r));
        }
    }
    for (Eigen::Index r = 0; r < lp.eq_coeffs.rows(); ++r) {
        Vector row = lp.eq_coeffs.row(r).transpose();
        if (std::abs(row.dot(x) - lp.eq_rhs[r]) > tol(lp.eq_rhs[r], row, x)) {
            throw LPError("simplex: returned point violates equality " + std::to_string(r));
        }
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double slack = 1e-9 * (1.0 + std::abs(x[i]));
        if (x[i] < lp.lower[i] - slack || x[i] > lp.upper[i] + slack) {
            throw LPError("simplex: returned point violates bound on variable " + std::to_string(i));
        }
    }
}

} // namespace

LPProblem LPProblem::with_variables(Eigen::Index n) {
    LPProblem lp;
    lp.objective = Vector::Zero(n);
    lp.ineq_coeffs.resize(0, n);
    lp.eq_coeffs.resize(0, n);
    lp.lower = Vector::Constant(n, -std::numeric_limits<double>::infinity());
    lp.upper = Vector::Constant(n, std::numeric_limits<double>::infinity());
    return lp;
}

void LPProblem::add_inequality(const Vector& row, double rhs) {
    ineq_coeffs.conservativeResize(ineq_coeffs.rows() + 1, num_vars());
    ineq_coeffs.row(ineq_coeffs.rows() - 1) = row.transpose();
    ineq_rhs.conservativeResize(ineq_rhs.size() + 1);
    ineq_rhs[ineq_rhs.size() - 1] = rhs;
}

void LPProblem::add_equality(const Vector& row, double rhs) {
    eq_coeffs.conservativeResize(eq_coeffs.rows() + 1, num_vars());
    eq_coeffs.row(eq_coeffs.rows() - 1) = row.transpose();
    eq_rhs.conservativeResize(eq_rhs.size() + 1);
    eq_rhs[eq_rhs.size() - 1] = rhs;
}

void LPProblem::validate() const {
    const Eigen::Index n = num_vars();
    if (ineq_coeffs.cols() != n || eq_coeffs.cols() != n || lower.size() != n || upper.size() != n ||
        ineq_rhs.size() != ineq_coeffs.rows() || eq_rhs.size() != eq_coeffs.rows()) {
        throw LPError("LP: inconsistent dimensions");
    }
    if (!objective.allFinite() || !ineq_coeffs.allFinite() || !ineq_rhs.allFinite() || !eq_coeffs.allFinite() ||
        !eq_rhs.allFinite()) {
        throw LPError("LP: non-finite data");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::isnan(lower[i]) || std::isnan(upper[i])) throw LPError("LP: NaN variable bound");
    }
}

LPSolution simplex_solve(const LPProblem& lp) {
    lp.validate();
    const Eigen::Index n = lp.num_vars();
    LPSolution sol;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (lp.lower[i] > lp.upper[i]) return sol;  // empty box
    }

    // Map every variable onto nonnegative standard-form columns.
    std::vector<VarMap> map(static_cast<std::size_t>(n));
    int ny = 0;
    std::vector<std::pair<int, double>> upper_rows;  // (column, y upper bound)
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool lo_fin = std::isfinite(lp.lower[i]);
        const bool hi_fin = std::isfinite(lp.upper[i]);
        if (lo_fin) {
            map[i] = {VarKind::Shift, lp.lower[i], ny};
            if (hi_fin) upper_rows.emplace_back(ny, lp.upper[i] - lp.lower[i]);
            ny += 1;
        } else if (hi_fin) {
            map[i] = {VarKind::Flip, lp.upper[i], ny};
            ny += 1;
        } else {
            map[i] = {VarKind::Split, 0.0, ny};
            ny += 2;
        }
    }

    struct Row {
        Vector coeffs;
        double rhs;
        bool equality;
    };
    std::vector<Row> rows;
    auto transform = [&](const Vector& a, double rhs, bool eq) {
        Row r{Vector::Zero(ny), rhs, eq};
        for (Eigen::Index i = 0; i < n; ++i) {
            const VarMap& vm = map[i];
            switch (vm.kind) {
            case VarKind::Shift:
                r.coeffs[vm.col] += a[i];
                r.rhs -= a[i] * vm.offset;
                break;
            case VarKind::Flip:
                r.coeffs[vm.col] -= a[i];
                r.rhs -= a[i] * vm.offset;
                break;
            case VarKind::Split:
                r.coeffs[vm.col] += a[i];
                r.coeffs[vm.col + 1] -= a[i];
                break;
            }
        }
        rows.push_back(std::move(r));
    };
    for (Eigen::Index r = 0; r < lp.ineq_coeffs.rows(); ++r) transform(lp.ineq_coeffs.row(r).transpose(), lp.ineq_rhs[r], false);
    for (Eigen::Index r = 0; r < lp.eq_coeffs.rows(); ++r) transform(lp.eq_coeffs.row(r).transpose(), lp.eq_rhs[r], true);
    for (auto [col, cap] : upper_rows) {
        Row r{Vector::Zero(ny), cap, false};
        r.coeffs[col] = 1.0;
        rows.push_back(std::move(r));
    }

    const int m = static_cast<int>(rows.size());
    int num_slack = 0;
    for (const Row& r : rows) num_slack += r.equality ? 0 : 1;
    // Columns: [y | slacks | artificials]; at most one artificial per row.
    const int slack0 = ny;
    const int art0 = ny + num_slack;
    const int ncols = art0 + m;
    Tableau tab(m, ncols);
    std::vector<bool> is_art(static_cast<std::size_t>(ncols), false);
    int slack = slack0;
    int num_art = 0;
    for (int i = 0; i < m; ++i) {
        const Row& r = rows[static_cast<std::size_t>(i)];
        const double flip = r.rhs < 0.0 ? -1.0 : 1.0;
        for (int j = 0; j < ny; ++j) tab.at(i, j) = flip * r.coeffs[j];
        tab.rhs(i) = flip * r.rhs;
        if (!r.equality) {
            tab.at(i, slack) = flip;
            if (flip > 0.0) {
                tab.basis()[i] = slack;
                ++slack;
                continue;
            }
            ++slack;
        }
        const int art = art0 + num_art++;
        tab.at(i, art) = 1.0;
        is_art[static_cast<std::size_t>(art)] = true;
        tab.basis()[i] = art;
    }

    std::vector<bool> allowed(static_cast<std::size_t>(ncols), true);
    for (int j = art0 + num_art; j < ncols; ++j) allowed[static_cast<std::size_t>(j)] = false;

    double rhs_scale = 1.0;
    for (int i = 0; i < m; ++i) rhs_scale = std::max(rhs_scale, std::abs(tab.rhs(i)));

    if (num_art > 0) {
        Vector phase1 = Vector::Zero(ncols);
        for (int j = art0; j < art0 + num_art; ++j) phase1[j] = 1.0;
        tab.set_costs(phase1);
        while (tab.step(allowed)) {
        }
        if (tab.objective_value() > 1e-9 * rhs_scale) {
            sol.pivots = tab.pivots();
            return sol;
        }
        // Drive remaining artificials out of the basis where possible.
        for (int i = 0; i < m; ++i) {
            if (!is_art[static_cast<std::size_t>(tab.basis()[i])]) continue;
            for (int j = 0; j < art0; ++j) {
                if (std::abs(tab.at(i, j)) > 1e-9) {
                    tab.pivot(i, j);
                    break;
                }
            }
        }
        for (int j = art0; j < ncols; ++j) allowed[static_cast<std::size_t>(j)] = false;
    }

    Vector cost = Vector::Zero(ncols);
    for (Eigen::Index i = 0; i < n; ++i) {
        const VarMap& vm = map[i];
        switch (vm.kind) {
        case VarKind::Shift: cost[vm.col] = lp.objective[i]; break;
        case VarKind::Flip: cost[vm.col] = -lp.objective[i]; break;
        case VarKind::Split:
            cost[vm.col] = lp.objective[i];
            cost[vm.col + 1] = -lp.objective[i];
            break;
        }
    }
    tab.set_costs(cost);
    while (tab.step(allowed)) {
    }

    Vector y = Vector::Zero(ncols);
    for (int i = 0; i < m; ++i) y[tab.basis()[i]] = tab.rhs(i);
    sol.x.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const VarMap& vm = map[i];
        switch (vm.kind) {
        case VarKind::Shift: sol.x[i] = vm.offset + y[vm.col]; break;
        case VarKind::Flip: sol.x[i] = vm.offset - y[vm.col]; break;
        case VarKind::Split: sol.x[i] = y[vm.col] - y[vm.col + 1]; break;
        }
    }
    check_solution(lp, sol.x);
    sol.status = LPStatus::Optimal;
    sol.value = lp.objective.dot(sol.x);
    sol.pivots = tab.pivots();
    return sol;
}

} // namespace bcrown
