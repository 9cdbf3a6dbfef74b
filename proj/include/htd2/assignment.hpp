#pragma once

#include "htd2/errors.hpp"
#include "htd2/estimation.hpp"
#include "htd2/geometry.hpp"
#include "htd2/rng.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace htd2 {

/// Action per free taxi, aligned with the free-taxi list handed to the
/// assignment routines.
using ActionProfile = std::vector<Action>;

/// Omega(s) = (1 / normalizer) * #{ j in scope : transition(cell_j, a_j) = s }.
/// `scope` selects a subset of taxis; empty means all of them.
Eigen::VectorXd fleet_distribution(std::span<const int> cells, const ActionProfile& profile, const StateSpace& space,
                                   double normalizer, std::span<const int> scope = {});

/// Omega*(s) = exp(beta max_a Q(s, a)) / sum_a' exp(beta Q(s, a')), evaluated
/// with the max subtracted. With `normalize` the result is rescaled to sum to 1.
template <typename Derived>
Eigen::VectorXd desired_distribution(const Eigen::MatrixBase<Derived>& Q, double beta, bool normalize = false) {
    if (beta < 0.0) throw ConfigError("assignment.beta must be >= 0");
    const Eigen::Index n_states = Q.size() / kNumActions;
    const Eigen::VectorXd q = Q.template cast<double>();
    Eigen::Map<const Eigen::Matrix<double, kNumActions, Eigen::Dynamic>> grid(q.data(), kNumActions, n_states);
    Eigen::VectorXd out(n_states);
    for (Eigen::Index s = 0; s < n_states; ++s) {
        const double m = grid.col(s).maxCoeff();
        // The max term contributes exp(0) = 1; the sum is >= 1 so the ratio is in (0, 1].
        out[s] = 1.0 / (beta * (grid.col(s).array() - m)).exp().sum();
    }
    if (normalize) out /= out.sum();
    return out;
}

/// Phi = -sum_s (Omega*(s) - Omega(s))^2.
inline double global_potential(const Eigen::VectorXd& omega_star, const Eigen::VectorXd& omega) {
    return -(omega_star - omega).squaredNorm();
}

/// J = -sum_{s in cells} (Omega*(s) - Omega_local(s))^2.
double marginal_utility(const Eigen::VectorXd& omega_star, const Eigen::VectorXd& omega_local,
                        std::span<const int> cells);

/// Probability that a prompted taxi keeps its current action:
/// exp(J / tau) / (exp(J / tau) + exp(J' / tau)), overflow-safe.
double stay_probability(double j_current, double j_alt, double tau);

struct BlllOptions {
    double tau = 1e-4;
    int k_stable = 10;
    /// Prompt cap is cap_factor * number of free taxis.
    int cap_factor = 50;
    /// Neighbor radius for local fleet distributions. At or above three
    /// cells the global counts restricted to S^i are used directly.
    double r_comm = 0.0;
    bool trace = false;
    /// Recompute the global potential after every accepted switch and check
    /// the marginal identity against it.
    bool check_identity = false;
};

struct BlllTraceRow {
    long round = 0;
    int taxi = 0;
    double j_current = 0.0;
    double j_alt = 0.0;
    bool switched = false;
    double phi = 0.0;
};

struct BlllResult {
    ActionProfile profile;
    ActionProfile initial_profile;
    long prompts = 0;
    bool truncated = false;
    double initial_phi = 0.0;
    double final_phi = 0.0;
    /// max |dPhi - dJ| over accepted switches (only with check_identity).
    double max_identity_gap = 0.0;
    std::vector<BlllTraceRow> trace;
};

/// Inputs for one assignment round. `omega_stars` holds one or more desired
/// distributions; taxi k scores with omega_stars[omega_of[k]] (all use entry 0
/// when `omega_of` is empty). Phi for tracing is taken against `phi_reference`,
/// or omega_stars[0] when that is empty.
struct BlllInput {
    std::span<const int> cells;
    std::span<const Position> positions;
    std::span<const Eigen::VectorXd> omega_stars;
    std::span<const int> omega_of;
    const Eigen::VectorXd* phi_reference = nullptr;
};

/// Binary log-linear learning over the free taxis, from a uniformly random
/// initial profile. A taxi is converged after k_stable consecutive prompts
/// without switching; the round ends when every taxi is converged or the
/// prompt cap is reached (then `truncated` is set).
BlllResult blll_assign(const BlllInput& in, const StateSpace& space, const BlllOptions& opt, Rng& rng);

/// Unilateral-deviation optimality: no single taxi can raise Phi by more
/// than `tol` by changing its action alone.
bool is_local_maximum(std::span<const int> cells, const ActionProfile& profile, const Eigen::VectorXd& omega_star,
                      const StateSpace& space, double tol);

/// Uniform random point in the cell reached from s under a.
Position action_to_dispatch(int s, Action a, const StateSpace& space, Rng& rng);

}  // namespace htd2
