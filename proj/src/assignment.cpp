#include "htd2/assignment.hpp"

#include "htd2/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace htd2 {

Eigen::VectorXd fleet_distribution(std::span<const int> cells, const ActionProfile& profile, const StateSpace& space,
                                   double normalizer, std::span<const int> scope) {
    if (profile.size() != cells.size()) throw ConfigError("action profile does not cover the taxis");
    if (!(normalizer > 0.0)) throw ConfigError("fleet distribution normalizer must be > 0");
    Eigen::VectorXd omega = Eigen::VectorXd::Zero(space.n_states());
    if (scope.empty()) {
        for (std::size_t k = 0; k < cells.size(); ++k) omega[space.transition(cells[k], profile[k])] += 1.0;
    } else {
        for (int k : scope) omega[space.transition(cells[k], profile[k])] += 1.0;
    }
    return omega / normalizer;
}

double marginal_utility(const Eigen::VectorXd& omega_star, const Eigen::VectorXd& omega_local,
                        std::span<const int> cells) {
    double j = 0.0;
    for (int s : cells) {
        const double d = omega_star[s] - omega_local[s];
        j -= d * d;
    }
    return j;
}

double stay_probability(double j_current, double j_alt, double tau) {
    if (!(tau > 0.0)) throw ConfigError("assignment.tau must be > 0");
    const double x = (j_alt - j_current) / tau;
    if (x > 0.0) {
        const double e = std::exp(-x);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(x));
}

namespace {

/// Local view of one taxi: S^i and the counts it sees on S^i.
struct LocalCells {
    std::array<int, kNumActions> cell{};
    int size = 0;

    int slot(int s) const {
        for (int k = 0; k < size; ++k)
            if (cell[k] == s) return k;
        return -1;
    }
};

double utility(const Eigen::VectorXd& omega_star, const LocalCells& S, const std::array<double, kNumActions>& count,
               double n) {
    double j = 0.0;
    for (int k = 0; k < S.size; ++k) {
        const double d = omega_star[S.cell[k]] - count[k] / n;
        j -= d * d;
    }
    return j;
}

double potential_from_counts(const Eigen::VectorXd& omega_star, const Eigen::VectorXd& counts, double n) {
    return -(omega_star - counts / n).squaredNorm();
}

}  // namespace

BlllResult blll_assign(const BlllInput& in, const StateSpace& space, const BlllOptions& opt, Rng& rng) {
    if (!(opt.tau > 0.0)) throw ConfigError("assignment.tau must be > 0");
    if (opt.k_stable < 1) throw ConfigError("assignment.k_stable must be >= 1");
    if (opt.cap_factor < 1) throw ConfigError("assignment.cap_factor must be >= 1");
    if (in.omega_stars.empty()) throw ConfigError("blll_assign needs a desired distribution");
    if (!in.omega_of.empty() && in.omega_of.size() != in.cells.size())
        throw ConfigError("omega_of must have one entry per free taxi");

    const int n = static_cast<int>(in.cells.size());
    BlllResult out;
    if (n == 0) return out;
    const double norm = n;
    const Eigen::VectorXd& phi_ref = in.phi_reference ? *in.phi_reference : in.omega_stars[0];
    auto omega_for = [&](int k) -> const Eigen::VectorXd& {
        return in.omega_stars[in.omega_of.empty() ? 0 : in.omega_of[k]];
    };

    std::vector<LocalCells> local(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const auto hood = space.neighborhood(in.cells[k]);
        local[k].size = static_cast<int>(hood.size());
        std::copy(hood.begin(), hood.end(), local[k].cell.begin());
    }

    const bool use_global = opt.r_comm >= 3.0 * space.cell_size() * (1.0 - 1e-12);
    std::vector<std::vector<int>> neighbors;
    if (!use_global) {
        if (in.positions.size() != in.cells.size()) throw ConfigError("positions must have one entry per free taxi");
        const SpatialIndex index(space, std::vector<Position>(in.positions.begin(), in.positions.end()));
        neighbors.resize(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) neighbors[k] = index.within(in.positions[k], opt.r_comm);
    }

    std::uniform_int_distribution<int> any_action(0, kNumActions - 1);
    std::uniform_int_distribution<int> other_action(1, kNumActions - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    out.profile.resize(static_cast<std::size_t>(n));
    for (auto& a : out.profile) a = action_from_index(any_action(rng));
    out.initial_profile = out.profile;

    auto post_cell = [&](int k, Action a) { return space.transition(in.cells[k], a); };
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(space.n_states());
    for (int k = 0; k < n; ++k) counts[post_cell(k, out.profile[k])] += 1.0;
    out.initial_phi = potential_from_counts(phi_ref, counts, norm);
    double phi = out.initial_phi;

    // Counts over S^k as seen by taxi k under the current profile.
    auto local_counts = [&](int k) {
        std::array<double, kNumActions> c{};
        const LocalCells& S = local[k];
        if (use_global) {
            for (int m = 0; m < S.size; ++m) c[m] = counts[S.cell[m]];
        } else {
            for (int j : neighbors[k]) {
                const int slot = S.slot(post_cell(j, out.profile[j]));
                if (slot >= 0) c[slot] += 1.0;
            }
        }
        return c;
    };

    std::vector<int> stable(static_cast<std::size_t>(n), 0);
    std::vector<int> active(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) active[k] = k;
    const long cap = static_cast<long>(opt.cap_factor) * n;

    while (!active.empty()) {
        if (out.prompts >= cap) {
            out.truncated = true;
            break;
        }
        ++out.prompts;
        std::uniform_int_distribution<std::size_t> pick(0, active.size() - 1);
        const std::size_t slot = pick(rng);
        const int k = active[slot];
        const Action a_cur = out.profile[k];
        const Action a_alt = action_from_index((index(a_cur) + other_action(rng)) % kNumActions);

        const LocalCells& S = local[k];
        const Eigen::VectorXd& omega_star = omega_for(k);
        std::array<double, kNumActions> c = local_counts(k);
        const double j_cur = utility(omega_star, S, c, norm);
        const int from = post_cell(k, a_cur);
        const int to = post_cell(k, a_alt);
        c[S.slot(from)] -= 1.0;
        c[S.slot(to)] += 1.0;
        const double j_alt = utility(omega_star, S, c, norm);

        const bool switched = unit(rng) >= stay_probability(j_cur, j_alt, opt.tau);
        if (switched) {
            const double phi_before = opt.check_identity ? potential_from_counts(phi_ref, counts, norm) : 0.0;
            out.profile[k] = a_alt;
            if (from != to) {
                const auto term = [&](int s) {
                    const double d = phi_ref[s] - counts[s] / norm;
                    return d * d;
                };
                phi += term(from) + term(to);
                counts[from] -= 1.0;
                counts[to] += 1.0;
                phi -= term(from) + term(to);
            }
            if (opt.check_identity) {
                const double phi_after = potential_from_counts(phi_ref, counts, norm);
                out.max_identity_gap =
                    std::max(out.max_identity_gap, std::abs((phi_after - phi_before) - (j_alt - j_cur)));
            }
            stable[k] = 0;
        } else if (++stable[k] >= opt.k_stable) {
            active[slot] = active.back();
            active.pop_back();
        }
        if (opt.trace) out.trace.push_back({out.prompts, k, j_cur, j_alt, switched, phi});
    }
    out.final_phi = potential_from_counts(phi_ref, counts, norm);
    return out;
}

bool is_local_maximum(std::span<const int> cells, const ActionProfile& profile, const Eigen::VectorXd& omega_star,
                      const StateSpace& space, double tol) {
    const double n = static_cast<double>(cells.size());
    if (cells.empty()) return true;
    const Eigen::VectorXd omega = fleet_distribution(cells, profile, space, n);
    const double phi = global_potential(omega_star, omega);
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const int from = space.transition(cells[k], profile[k]);
        for (Action a : kAllActions) {
            const int to = space.transition(cells[k], a);
            if (to == from) continue;
            Eigen::VectorXd moved = omega;
            moved[from] -= 1.0 / n;
            moved[to] += 1.0 / n;
            if (global_potential(omega_star, moved) > phi + tol) return false;
        }
    }
    return true;
}

Position action_to_dispatch(int s, Action a, const StateSpace& space, Rng& rng) {
    return sample_in_cell(space, space.transition(s, a), rng);
}

}  // namespace htd2
