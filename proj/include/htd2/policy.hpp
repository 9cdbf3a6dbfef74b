#pragma once

#include "htd2/errors.hpp"
#include "htd2/estimation.hpp"
#include "htd2/geometry.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace htd2 {

/// Deterministic cell MDP: successor table plus discount.
struct MdpSpec {
    std::vector<int> successor;  ///< successor[index(s, a)] = transition(s, a)
    int n_states = 0;
    double gamma = 0.9;

    MdpSpec() = default;
    MdpSpec(const StateSpace& space, double discount)
        : successor(space.successor()), n_states(space.n_states()), gamma(discount) {
        if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("discount gamma must lie in (0, 1)");
    }

    int n_q() const noexcept { return n_states * kNumActions; }
};

/// max_a Q(s, a) for every state.
template <typename Derived>
QVector<typename Derived::Scalar> state_values(const Eigen::MatrixBase<Derived>& Q) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n_states = Q.size() / kNumActions;
    const QVector<Scalar> q = Q;  // contiguous copy so the 5 x |S| view is valid
    Eigen::Map<const Eigen::Matrix<Scalar, kNumActions, Eigen::Dynamic>> grid(q.data(), kNumActions, n_states);
    return grid.colwise().maxCoeff().transpose();
}

/// (F Q)[index(s, a)] = max_a' Q(transition(s, a), a').
template <typename Derived>
QVector<typename Derived::Scalar> greedy_backup(const Eigen::MatrixBase<Derived>& Q, const MdpSpec& mdp) {
    using Scalar = typename Derived::Scalar;
    const QVector<Scalar> v = state_values(Q);
    QVector<Scalar> out(mdp.n_q());
    for (int q = 0; q < mdp.n_q(); ++q) out[q] = v[mdp.successor[q]];
    return out;
}

/// T Q = R + gamma F Q.
template <typename DerivedR, typename DerivedQ>
QVector<typename DerivedQ::Scalar> bellman_operator(const Eigen::MatrixBase<DerivedR>& R,
                                                     const Eigen::MatrixBase<DerivedQ>& Q, const MdpSpec& mdp) {
    using Scalar = typename DerivedQ::Scalar;
    return R + Scalar(mdp.gamma) * greedy_backup(Q, mdp);
}

/// ||T Q - Q||_inf.
template <typename DerivedR, typename DerivedQ>
typename DerivedQ::Scalar bellman_residual(const Eigen::MatrixBase<DerivedR>& R, const Eigen::MatrixBase<DerivedQ>& Q,
                                           const MdpSpec& mdp) {
    return (bellman_operator(R, Q, mdp) - Q).cwiseAbs().maxCoeff();
}

struct MpiOptions {
    int eval_sweeps = 20;
    double tol = 1e-8;
    long max_sweeps = 100000;
};

/**
 * Modified policy iteration on the Q form of the Bellman equation.
 *
 * Each outer round extracts the greedy policy from the current iterate and
 * applies `eval_sweeps` fixed-policy backups. Starting from the constant
 * min(R) / (1 - gamma) lower bound keeps the iterates monotone. Returns once
 * the Bellman residual is at most `tol`; throws ConvergenceError when the
 * total sweep count passes `max_sweeps`.
 */
template <typename Derived>
QVector<typename Derived::Scalar> bellman_mpi(const Eigen::MatrixBase<Derived>& R, const MdpSpec& mdp,
                                              const MpiOptions& opt = {}) {
    using Scalar = typename Derived::Scalar;
    if (opt.eval_sweeps < 1) throw ConfigError("MPI needs at least one evaluation sweep");
    if (!(opt.tol > 0.0)) throw ConfigError("MPI tolerance must be > 0");
    if (R.size() != mdp.n_q()) throw ConfigError("reward length does not match the MDP");

    const Scalar gamma(mdp.gamma);
    QVector<Scalar> Q = QVector<Scalar>::Constant(R.size(), R.minCoeff() / (Scalar(1) - gamma));
    std::vector<int> policy(static_cast<std::size_t>(mdp.n_states));
    long sweeps = 0;
    for (;;) {
        const QVector<Scalar> TQ = bellman_operator(R, Q, mdp);
        const Scalar residual = (TQ - Q).cwiseAbs().maxCoeff();
        if (residual <= Scalar(opt.tol)) return Q;
        if (sweeps >= opt.max_sweeps)
            throw ConvergenceError("bellman_mpi: no convergence after " + std::to_string(sweeps) +
                                       " sweeps, residual " + std::to_string(static_cast<double>(residual)),
                                   static_cast<double>(residual));
        Q = TQ;
        ++sweeps;
        // Greedy policy of the improved iterate, then evaluate it.
        for (int s = 0; s < mdp.n_states; ++s) {
            int best = 0;
            for (int a = 1; a < kNumActions; ++a)
                if (Q[s * kNumActions + a] > Q[s * kNumActions + best]) best = a;
            policy[s] = s * kNumActions + best;
        }
        QVector<Scalar> next(Q.size());
        for (int k = 1; k < opt.eval_sweeps && sweeps < opt.max_sweeps; ++k, ++sweeps) {
            for (int q = 0; q < mdp.n_q(); ++q) next[q] = R[q] + gamma * Q[policy[mdp.successor[q]]];
            Q.swap(next);
        }
    }
}

/// Q + alpha (R + gamma F Q - Q).
template <typename DerivedQ, typename DerivedR>
QVector<typename DerivedQ::Scalar> td_update(const Eigen::MatrixBase<DerivedQ>& Q, const Eigen::MatrixBase<DerivedR>& R,
                                             const MdpSpec& mdp, double alpha) {
    using Scalar = typename DerivedQ::Scalar;
    return Q + Scalar(alpha) * (bellman_operator(R, Q, mdp) - Q);
}

/// Sub-optimality bound 2 sqrt(n_q (eps + varsigma)) / ((1 - gamma)(1 - sqrt(1 - lambda))).
inline double delta_e(double lambda_bar, int n_q, double process_variance, double noise_variance, double gamma) {
    const double lam = std::clamp(lambda_bar, 0.0, 1.0);
    const double rate = 1.0 - std::sqrt(1.0 - lam);
    if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
    return 2.0 * std::sqrt(n_q * (process_variance + noise_variance)) / ((1.0 - gamma) * rate);
}

struct HybridConfig {
    double delta_d = 0.0;  ///< absolute desired error; +inf disables resets
    double alpha = 0.75;
    double process_variance = 0.0187;
    double noise_variance = 0.014;
    int n_T = 10;
    int n_q = 0;
    MpiOptions mpi;
};

struct HybridOutcome {
    bool triggered = false;
    double max_delta_e = 0.0;
    QTable bellman;  ///< set when triggered
};

/**
 * One hybrid policy step over all agents.
 *
 * If any agent's bound exceeds delta_d every agent is reset to the Bellman
 * solution of the central reward estimate; otherwise each agent takes a TD
 * step on its own reward estimate. All-or-nothing: no agent is left half
 * updated. `central_solution`, when given, must be bellman_mpi(central_reward)
 * and saves recomputing it.
 */
inline HybridOutcome hybrid_step(std::span<QTable> agent_q, std::span<const QTable> agent_reward,
                                 std::span<const double> lambda_bar, const QTable& central_reward,
                                 const HybridConfig& cfg, const MdpSpec& mdp,
                                 const QTable* central_solution = nullptr) {
    HybridOutcome out;
    out.max_delta_e = 0.0;
    for (double lam : lambda_bar)
        out.max_delta_e = std::max(
            out.max_delta_e, delta_e(lam, cfg.n_q, cfg.process_variance, cfg.noise_variance, mdp.gamma));
    if (out.max_delta_e > cfg.delta_d) {
        out.triggered = true;
        out.bellman = central_solution ? *central_solution : bellman_mpi(central_reward, mdp, cfg.mpi);
        for (auto& q : agent_q) q = out.bellman;
        return out;
    }
    for (std::size_t i = 0; i < agent_q.size(); ++i) agent_q[i] = td_update(agent_q[i], agent_reward[i], mdp, cfg.alpha);
    return out;
}

}  // namespace htd2
