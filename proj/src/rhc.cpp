#include "htd2/rhc.hpp"

#include "htd2/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace htd2 {

std::string RhcLayout::variable_name(int v) const {
    if (v < static_cast<int>(flows.size())) {
        const Flow& f = flows[v];
        return "u_" + std::to_string(f.period) + "_" + std::to_string(f.from) + "_" + std::to_string(f.to);
    }
    for (const auto& r : surplus) {
        if (r.zp == v) return "zp_" + std::to_string(r.period) + "_" + std::to_string(r.cell);
        if (r.slack == v) return "s_" + std::to_string(r.period) + "_" + std::to_string(r.cell);
    }
    return "v" + std::to_string(v);
}

RhcProgram build_rhc_lp(std::span<const double> x0, const Eigen::MatrixXd& demand, double gamma, int horizon,
                        const StateSpace& space) {
    const int n = space.n_states();
    if (horizon < 1) throw ConfigError("rhc.horizon must be >= 1");
    if (static_cast<int>(x0.size()) != n) throw ConfigError("RHC initial counts must have one entry per cell");
    if (demand.rows() != horizon + 1 || demand.cols() != n)
        throw ConfigError("RHC demand slice must be (horizon + 1) x cells");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("discount gamma must lie in (0, 1)");
    for (double v : x0)
        if (v < 0.0) throw ConfigError("RHC initial counts must be >= 0");

    RhcProgram prog;
    RhcLayout& L = prog.layout;
    L.n_cells = n;
    L.horizon = horizon;
    std::vector<std::vector<int>> hood(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) hood[i] = space.neighborhood(i);
    for (int k = 0; k < horizon; ++k)
        for (int i = 0; i < n; ++i) {
            L.first_flow.push_back(static_cast<int>(L.flows.size()));
            for (int j : hood[i]) L.flows.push_back({k, i, j});
        }
    L.first_flow.push_back(static_cast<int>(L.flows.size()));

    const int n_flows = static_cast<int>(L.flows.size());
    int next_var = n_flows;
    int next_row = horizon * n;
    std::vector<int> surplus_row(static_cast<std::size_t>((horizon + 1) * n), -1);
    for (int k = 1; k <= horizon; ++k)
        for (int i = 0; i < n; ++i) {
            const double w = demand(k, i);
            if (!(w > 0.0)) continue;
            surplus_row[k * n + i] = static_cast<int>(L.surplus.size());
            L.surplus.push_back({k, i, next_var, next_var + 1, w});
            next_var += 2;
            ++next_row;
        }
    L.n_vars = next_var;
    L.n_rows = next_row;

    auto& lp = prog.lp;
    lp.A = Eigen::MatrixXd::Zero(L.n_rows, L.n_vars);
    lp.b = Eigen::VectorXd::Zero(L.n_rows);
    lp.c = Eigen::VectorXd::Zero(L.n_vars);
    const int first_surplus_row = horizon * n;

    for (int f = 0; f < n_flows; ++f) {
        const auto& fl = L.flows[f];
        lp.A(L.conservation_row(fl.period, fl.from), f) += 1.0;
        const int k_arr = fl.period + 1;
        if (k_arr < horizon) lp.A(L.conservation_row(k_arr, fl.to), f) -= 1.0;
        const int sr = surplus_row[k_arr * n + fl.to];
        if (sr >= 0)
            lp.A(first_surplus_row + sr, f) += 1.0;
        else
            lp.c[f] -= std::pow(gamma, k_arr);
    }
    for (int i = 0; i < n; ++i) lp.b[L.conservation_row(0, i)] = x0[i];
    for (std::size_t r = 0; r < L.surplus.size(); ++r) {
        const auto& row = L.surplus[r];
        const int ri = first_surplus_row + static_cast<int>(r);
        lp.A(ri, row.zp) = -1.0;
        lp.A(ri, row.slack) = 1.0;
        lp.b[ri] = row.demand;
        lp.c[row.zp] = -std::pow(gamma, row.period);
    }
    for (int i = 0; i < n; ++i) prog.constant += std::min(demand(0, i) - x0[i], 0.0);

    // All-stay plan: occupancy stays x0, so each surplus row is covered by its
    // slack when demand >= x0 and by zp otherwise.
    for (int k = 0; k < horizon; ++k)
        for (int i = 0; i < n; ++i) prog.initial_basis.push_back(L.first_flow[L.conservation_row(k, i)]);
    for (const auto& row : L.surplus) prog.initial_basis.push_back(row.demand >= x0[row.cell] ? row.slack : row.zp);
    return prog;
}

RhcPlan solve_rhc(const RhcProgram& program, std::span<const double> x0, const SimplexOptions& opt) {
    const RhcLayout& L = program.layout;
    const auto sol = solve_lp(program.lp, opt, program.initial_basis);
    RhcPlan plan;
    plan.iterations = sol.iterations;
    plan.flow.assign(sol.x.data(), sol.x.data() + L.flows.size());
    plan.occupancy = Eigen::MatrixXd::Zero(L.horizon + 1, L.n_cells);
    for (int i = 0; i < L.n_cells; ++i) plan.occupancy(0, i) = x0[i];
    for (std::size_t f = 0; f < L.flows.size(); ++f)
        plan.occupancy(L.flows[f].period + 1, L.flows[f].to) += plan.flow[f];
    plan.objective = sol.objective + program.constant;
    return plan;
}

std::vector<std::vector<int>> round_first_period(const RhcPlan& plan, const RhcLayout& layout,
                                                 std::span<const int> x0) {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(layout.n_cells));
    for (int i = 0; i < layout.n_cells; ++i) {
        const int begin = layout.first_flow[layout.conservation_row(0, i)];
        const int end = layout.first_flow[layout.conservation_row(0, i) + 1];
        const int width = end - begin;
        std::vector<int>& moves = out[i];
        moves.assign(static_cast<std::size_t>(width), 0);
        std::vector<double> rem(static_cast<std::size_t>(width));
        int assigned = 0;
        for (int k = 0; k < width; ++k) {
            const double v = std::max(plan.flow[begin + k], 0.0);
            moves[k] = static_cast<int>(std::floor(v + 1e-9));
            rem[k] = v - moves[k];
            assigned += moves[k];
        }
        std::vector<int> order(static_cast<std::size_t>(width));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
        for (int r = 0; assigned < x0[i]; r = (r + 1) % width, ++assigned) ++moves[order[r]];
        // Numerical overshoot: take back from the smallest remainders.
        for (int r = width - 1; assigned > x0[i]; r = (r + width - 1) % width)
            if (moves[order[r]] > 0) {
                --moves[order[r]];
                --assigned;
            }
    }
    return out;
}

std::vector<Position> rhc_dispatch(std::span<const int> cells, const Eigen::MatrixXd& demand, double gamma,
                                   int horizon, const StateSpace& space, Rng& rng, RhcPlan* plan_out) {
    const int n = space.n_states();
    std::vector<int> counts(static_cast<std::size_t>(n), 0);
    for (int s : cells) ++counts[s];
    const std::vector<double> x0(counts.begin(), counts.end());
    const RhcProgram prog = build_rhc_lp(x0, demand, gamma, horizon, space);
    RhcPlan plan = solve_rhc(prog, x0);
    const auto moves = round_first_period(plan, prog.layout, counts);

    // Destination list per source cell, expanded in neighborhood order.
    std::vector<std::vector<int>> slots(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto hood = space.neighborhood(i);
        for (std::size_t k = 0; k < hood.size(); ++k) slots[i].insert(slots[i].end(), moves[i][k], hood[k]);
    }
    std::vector<std::size_t> used(static_cast<std::size_t>(n), 0);
    std::vector<Position> targets;
    targets.reserve(cells.size());
    for (int s : cells) targets.push_back(sample_in_cell(space, slots[s][used[s]++], rng));
    if (plan_out) *plan_out = std::move(plan);
    return targets;
}

void write_lp(std::ostream& out, const RhcProgram& program) {
    const auto& L = program.layout;
    const auto& lp = program.lp;
    auto term = [&](double a, int v, bool first) {
        std::string s;
        if (a < 0)
            s = first ? "-" : " - ";
        else if (!first)
            s = " + ";
        const double m = std::abs(a);
        if (m != 1.0) s += std::to_string(m) + " ";
        return s + L.variable_name(v);
    };
    out << "maximize: ";
    bool first = true;
    for (int v = 0; v < L.n_vars; ++v)
        if (lp.c[v] != 0.0) {
            out << term(lp.c[v], v, first);
            first = false;
        }
    if (first) out << "0";
    out << " + " << program.constant << '\n';
    for (int r = 0; r < L.n_rows; ++r) {
        out << "r" << r << ": ";
        first = true;
        for (int v = 0; v < L.n_vars; ++v)
            if (lp.A(r, v) != 0.0) {
                out << term(lp.A(r, v), v, first);
                first = false;
            }
        out << " = " << lp.b[r] << '\n';
    }
    out << "bounds: all variables >= 0\n";
}

}  // namespace htd2
