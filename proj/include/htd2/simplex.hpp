#pragma once

#include "htd2/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace htd2 {

/// maximize c^T x  subject to  A x = b,  x >= 0.
template <typename Scalar>
struct LpProblem {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> A;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> b;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> c;

    Eigen::Index n_vars() const noexcept { return A.cols(); }
    Eigen::Index n_rows() const noexcept { return A.rows(); }
};

template <typename Scalar>
struct LpSolution {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
    Scalar objective{0};
    std::vector<int> basis;  ///< basic variable per row; -1 for dropped redundant rows
    long iterations = 0;
    bool used_phase_one = false;
};

struct SimplexOptions {
    /// 0 picks 50 * (rows + cols).
    long max_iterations = 0;
    /// Consecutive degenerate pivots before switching from Dantzig pricing to
    /// Bland's rule. Bland stays on until a pivot makes progress.
    int bland_after = 50;
};

namespace detail {

template <typename Scalar>
Scalar lp_tolerance() {
    if constexpr (std::numeric_limits<Scalar>::is_exact)
        return Scalar(0);
    else
        return Scalar(1e-9);
}

/// Dense simplex tableau: rows 0..m-1 constraints, row m the objective row
/// holding negated reduced costs; last column the right-hand side.
template <typename Scalar>
class Tableau {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    Tableau(Eigen::Index rows, Eigen::Index cols) : T_(Matrix::Zero(rows + 1, cols + 1)), basis_(rows, -1) {}

    Eigen::Index m() const { return T_.rows() - 1; }
    Eigen::Index n() const { return T_.cols() - 1; }
    Scalar& at(Eigen::Index r, Eigen::Index c) { return T_(r, c); }
    const Scalar& at(Eigen::Index r, Eigen::Index c) const { return T_(r, c); }
    Scalar& rhs(Eigen::Index r) { return T_(r, n()); }
    Scalar& cost(Eigen::Index c) { return T_(m(), c); }
    std::vector<int>& basis() { return basis_; }

    void pivot(Eigen::Index r, Eigen::Index c) {
        const Scalar p = T_(r, c);
        nz_.clear();
        for (Eigen::Index k = 0; k <= n(); ++k) {
            if (T_(r, k) == Scalar(0)) continue;
            T_(r, k) /= p;
            nz_.push_back(k);
        }
        T_(r, c) = Scalar(1);
        for (Eigen::Index i = 0; i <= m(); ++i) {
            if (i == r) continue;
            const Scalar f = T_(i, c);
            if (f == Scalar(0)) continue;
            for (Eigen::Index k : nz_) T_(i, k) -= f * T_(r, k);
            T_(i, c) = Scalar(0);
        }
        basis_[static_cast<std::size_t>(r)] = static_cast<int>(c);
    }

    /// Runs primal simplex on the current objective row over columns
    /// [0, allowed). Returns the number of pivots.
    long optimize(Eigen::Index allowed, const SimplexOptions& opt, long budget) {
        const Scalar eps = lp_tolerance<Scalar>();
        long iters = 0;
        int degenerate = 0;
        for (;;) {
            const bool bland = degenerate >= opt.bland_after;
            Eigen::Index enter = -1;
            Scalar best = -eps;
            for (Eigen::Index j = 0; j < allowed; ++j) {
                if (T_(m(), j) < best) {
                    enter = j;
                    if (bland) break;
                    best = T_(m(), j);
                }
            }
            if (enter < 0) return iters;
            if (iters >= budget) throw LpError("simplex iteration limit reached");

            Eigen::Index leave = -1;
            Scalar ratio{0};
            for (Eigen::Index i = 0; i < m(); ++i) {
                if (!(T_(i, enter) > eps)) continue;
                const Scalar q = T_(i, n()) / T_(i, enter);
                if (leave < 0 || q < ratio || (q == ratio && basis_[i] < basis_[leave])) {
                    leave = i;
                    ratio = q;
                }
            }
            if (leave < 0) throw LpError("linear program is unbounded");
            degenerate = ratio > eps ? 0 : degenerate + 1;
            pivot(leave, enter);
            ++iters;
        }
    }

private:
    Matrix T_;
    std::vector<int> basis_;
    std::vector<Eigen::Index> nz_;
};

}  // namespace detail

/**
 * Primal tableau simplex. With `initial_basis` (one column per row) the
 * basis is installed by Gauss-Jordan pivots and phase one is skipped when it
 * is primal feasible; otherwise a two-phase method with one artificial per
 * row is used. Throws LpError on infeasible or unbounded problems.
 */
template <typename Scalar>
LpSolution<Scalar> solve_lp(const LpProblem<Scalar>& lp, const SimplexOptions& opt = {},
                            std::span<const int> initial_basis = {}) {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const Eigen::Index m = lp.n_rows();
    const Eigen::Index n = lp.n_vars();
    if (lp.b.size() != m || lp.c.size() != n) throw LpError("LP dimensions are inconsistent");
    const Scalar eps = detail::lp_tolerance<Scalar>();
    const long budget = opt.max_iterations > 0 ? opt.max_iterations : 50L * static_cast<long>(m + n + 1);

    LpSolution<Scalar> sol;
    auto finish = [&](detail::Tableau<Scalar>& T) {
        sol.x = Vector::Zero(n);
        for (Eigen::Index r = 0; r < m; ++r) {
            const int v = T.basis()[r];
            if (v >= 0 && v < n) sol.x[v] = std::max(T.rhs(r), Scalar(0));
        }
        sol.objective = lp.c.dot(sol.x);
        sol.basis = T.basis();
        for (int& v : sol.basis)
            if (v >= n) v = -1;
        return sol;
    };
    auto load_objective = [&](detail::Tableau<Scalar>& T) {
        for (Eigen::Index j = 0; j <= T.n(); ++j) T.cost(j) = Scalar(0);
        for (Eigen::Index j = 0; j < n; ++j) T.cost(j) = -lp.c[j];
        for (Eigen::Index r = 0; r < m; ++r) {
            const int v = T.basis()[r];
            if (v < 0 || v >= n) continue;
            const Scalar f = T.cost(v);
            if (f == Scalar(0)) continue;
            for (Eigen::Index j = 0; j <= T.n(); ++j)
                if (T.at(r, j) != Scalar(0)) T.cost(j) -= f * T.at(r, j);
            T.cost(v) = Scalar(0);
        }
    };

    if (!initial_basis.empty()) {
        if (static_cast<Eigen::Index>(initial_basis.size()) != m) throw LpError("initial basis size must equal rows");
        detail::Tableau<Scalar> T(m, n);
        for (Eigen::Index r = 0; r < m; ++r) {
            for (Eigen::Index j = 0; j < n; ++j) T.at(r, j) = lp.A(r, j);
            T.rhs(r) = lp.b[r];
        }
        std::vector<char> taken(static_cast<std::size_t>(m), 0);
        bool ok = true;
        for (int col : initial_basis) {
            if (col < 0 || col >= n) throw LpError("initial basis column out of range");
            Eigen::Index row = -1;
            Scalar best{0};
            for (Eigen::Index r = 0; r < m; ++r) {
                if (taken[r]) continue;
                const Scalar a = T.at(r, col) < Scalar(0) ? Scalar(-T.at(r, col)) : T.at(r, col);
                if (a > best) {
                    best = a;
                    row = r;
                }
            }
            if (row < 0 || !(best > eps)) {
                ok = false;
                break;
            }
            taken[row] = 1;
            T.pivot(row, col);
        }
        if (ok)
            for (Eigen::Index r = 0; r < m && ok; ++r) {
                if (T.rhs(r) < -eps) ok = false;
                else if (T.rhs(r) < Scalar(0)) T.rhs(r) = Scalar(0);
            }
        if (ok) {
            load_objective(T);
            sol.iterations = T.optimize(n, opt, budget);
            return finish(T);
        }
    }

    // Phase one: artificials a_r in columns n .. n+m-1, rows flipped so b >= 0.
    sol.used_phase_one = true;
    detail::Tableau<Scalar> T(m, n + m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const bool flip = lp.b[r] < Scalar(0);
        for (Eigen::Index j = 0; j < n; ++j) T.at(r, j) = flip ? Scalar(-lp.A(r, j)) : lp.A(r, j);
        T.rhs(r) = flip ? Scalar(-lp.b[r]) : lp.b[r];
        T.at(r, n + r) = Scalar(1);
        T.basis()[r] = static_cast<int>(n + r);
    }
    // Objective: maximize -sum a_r, expressed in the nonbasic columns.
    for (Eigen::Index r = 0; r < m; ++r)
        for (Eigen::Index j = 0; j < n; ++j) T.cost(j) -= T.at(r, j);
    for (Eigen::Index r = 0; r < m; ++r) T.cost(n + m) -= T.rhs(r);
    sol.iterations = T.optimize(n + m, opt, budget);
    // -cost(rhs) is the phase-one objective value -sum a_r.
    Scalar infeasibility{0};
    for (Eigen::Index r = 0; r < m; ++r)
        if (T.basis()[r] >= n) infeasibility += T.rhs(r);
    if (infeasibility > eps * Scalar(static_cast<double>(m + 1)) * Scalar(1000))
        throw LpError("linear program is infeasible");

    // Drive remaining artificials out; rows without a usable pivot are redundant.
    for (Eigen::Index r = 0; r < m; ++r) {
        if (T.basis()[r] < n) continue;
        Eigen::Index col = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
            const Scalar a = T.at(r, j) < Scalar(0) ? Scalar(-T.at(r, j)) : T.at(r, j);
            if (a > eps) {
                col = j;
                break;
            }
        }
        if (col >= 0) T.pivot(r, col);
        // Redundant: the artificial stays basic at zero and never leaves.
    }
    load_objective(T);
    sol.iterations += T.optimize(n, opt, budget);
    return finish(T);
}

}  // namespace htd2
