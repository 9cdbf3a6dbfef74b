#pragma once

#include "htd2/geometry.hpp"
#include "htd2/rng.hpp"
#include "htd2/simplex.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace htd2 {

/// Variable and row bookkeeping for the receding-horizon flow program.
///
/// Flow u_{ij,k} for period k in [0, horizon) and j in S^i. Occupancy
/// x_{k+1,i} is the arrival sum into i, substituted directly. For every
/// (k, i) with k >= 1 and positive expected demand the surplus term
/// min(w - x, 0) becomes -zp with x - zp + slack = w; where w = 0 the term
/// is simply -x and needs no row.
struct RhcLayout {
    struct Flow {
        int period;
        int from;
        int to;
    };
    struct SurplusRow {
        int period;  ///< k in [1, horizon]
        int cell;
        int zp;      ///< variable index of -z >= 0
        int slack;   ///< variable index of the slack
        double demand;
    };

    int n_cells = 0;
    int horizon = 0;
    std::vector<Flow> flows;
    /// Flows leaving (period, cell) occupy [first_flow[r], first_flow[r + 1])
    /// with r = conservation_row(period, cell), in neighborhood order.
    std::vector<int> first_flow;
    std::vector<SurplusRow> surplus;
    int n_vars = 0;
    int n_rows = 0;

    /// Conservation row of (period, cell).
    int conservation_row(int period, int cell) const { return period * n_cells + cell; }
    std::string variable_name(int v) const;
};

struct RhcProgram {
    LpProblem<double> lp;
    RhcLayout layout;
    std::vector<int> initial_basis;  ///< the all-stay plan plus slacks
    double constant = 0.0;           ///< objective contribution of the fixed x_{t0}
};

/// Builds the program for initial free-taxi counts `x0` and expected demand
/// `demand` whose row k is the per-cell forecast for period t0 + k,
/// k = 0..horizon.
RhcProgram build_rhc_lp(std::span<const double> x0, const Eigen::MatrixXd& demand, double gamma, int horizon,
                        const StateSpace& space);

struct RhcPlan {
    std::vector<double> flow;     ///< aligned with layout.flows
    Eigen::MatrixXd occupancy;    ///< (horizon + 1) x cells, row 0 = x0
    double objective = 0.0;       ///< including the constant term
    long iterations = 0;
};

RhcPlan solve_rhc(const RhcProgram& program, std::span<const double> x0, const SimplexOptions& opt = {});

/// Largest-remainder rounding of the first-period flows. Result[i][k] is the
/// number of taxis moving from cell i to neighborhood(i)[k]; each row sums to x0[i].
std::vector<std::vector<int>> round_first_period(const RhcPlan& plan, const RhcLayout& layout,
                                                 std::span<const int> x0);

/// Dispatch targets for free taxis in ascending id order (`cells[k]` is the
/// cell of the k-th free taxi). Taxis of one source cell fill destinations in
/// neighborhood order; each gets a uniform point in its destination cell.
std::vector<Position> rhc_dispatch(std::span<const int> cells, const Eigen::MatrixXd& demand, double gamma,
                                   int horizon, const StateSpace& space, Rng& rng, RhcPlan* plan_out = nullptr);

/// Text dump, one constraint per line, for cross-checking with other solvers.
void write_lp(std::ostream& out, const RhcProgram& program);

}  // namespace htd2
