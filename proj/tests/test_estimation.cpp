#include <doctest.h>

#include "htd2/errors.hpp"
#include "htd2/estimation.hpp"

#include <cmath>
#include <numeric>
#include <random>

using namespace htd2;

namespace {

StateSpace grid(int w, int h, double ds) {
    MapSpec m;
    m.width = w;
    m.height = h;
    m.cell_size = ds;
    return StateSpace(m);
}

RewardSample full_sample(const QTable& truth, double noise, std::mt19937_64& rng) {
    RewardSample r;
    std::normal_distribution<double> n(0.0, std::sqrt(noise));
    for (int q = 0; q < truth.size(); ++q) {
        r.indices.push_back(q);
        r.values.push_back(truth[q] + (noise > 0 ? n(rng) : 0.0));
    }
    return r;
}

AgentMessage message(int agent, RewardSample s, std::vector<double> gains) {
    AgentMessage m;
    m.agent = agent;
    m.sample = std::move(s);
    m.gain = std::move(gains);
    return m;
}

}  // namespace

TEST_CASE("reward samples") {
    Rng rng(1);
    const Position p(0.4, 0.1);
    CHECK(reward_sample_value(p, p, p, 0.125, 0.0, rng) == 0.0);
    CHECK(reward_sample_value(Position(0, 0), Position(1, 0), Position(1, 1), 1.0, 0.0, rng) == doctest::Approx(-2.0));
    CHECK_THROWS_AS(reward_sample_value(p, p, p, 1.0, -1.0, rng), ConfigError);

    const double varsigma = 0.014, truth = reward_mean(Position(0, 0), Position(0.3, 0), Position(0.3, 0.4), 0.125);
    double sum = 0.0;
    const int n = 10000;
    for (int k = 0; k < n; ++k)
        sum += reward_sample_value(Position(0, 0), Position(0.3, 0), Position(0.3, 0.4), 0.125, varsigma, rng);
    CHECK(std::abs(sum / n - truth) <= 4.0 * std::sqrt(varsigma / n));
}

TEST_CASE("observation covers the taxi's cell") {
    const StateSpace space = grid(3, 3, 1.0);
    Rng rng(2);
    const CustomerRequest c{0.0, 1.0, Position(2.5, 2.5), Position(0.5, 0.5)};
    const auto obs = build_observation(c, Position(0.3, 0.4), space, 1.0, 0.0, rng);
    REQUIRE(obs.size() == 5);
    for (int k = 0; k < 5; ++k) CHECK(obs.indices[k] == k);
    // Hand evaluation: taxi (0.3, 0.4), pickup (2.5, 2.5), speed 1.
    CHECK(obs.values[0] == doctest::Approx(-(std::sqrt(0.05) + std::sqrt(8.0))));  // stay, u = (0.5, 0.5)
    CHECK(obs.values[1] == doctest::Approx(-(std::sqrt(1.45) + std::sqrt(5.0))));  // right, u = (1.5, 0.5)
    CHECK(obs.values[2] == doctest::Approx(-(std::sqrt(1.25) + std::sqrt(5.0))));  // up, u = (0.5, 1.5)
    CHECK(obs.values[3] == obs.values[0]);                                         // left is blocked
    CHECK(obs.values[4] == obs.values[0]);                                         // down is blocked

    const auto centred = build_observation(c, space.centroid(4), space, 1.0, 0.0, rng);
    CHECK(centred.indices.front() == 20);
    CHECK(centred.values[0] == doctest::Approx(-eta(space.centroid(4), c.pickup, 1.0)));
}

TEST_CASE("scalar kalman update") {
    RewardFilterState f = RewardFilterState::make(QTable::Constant(3, 1.0), 0.5);
    RewardSample obs;
    obs.indices = {1};
    obs.values = {3.0};
    const auto g = kalman_update(f, obs, 0.0, 0.5);
    CHECK(g.gain[0] == 0.0);
    CHECK(g.estimate[0] == 1.0);
    CHECK(g.gain[1] == doctest::Approx(0.5));
    CHECK(g.estimate[1] == doctest::Approx(2.0));
    CHECK(g.variance[1] == doctest::Approx(0.25));
    CHECK(g.variance[0] == doctest::Approx(0.5));

    RewardFilterState exact = RewardFilterState::make(QTable::Zero(1), 0.0);
    RewardSample one;
    one.indices = {0};
    one.values = {4.0};
    const auto e = kalman_update(exact, one, 0.0, 0.0);
    CHECK(e.gain[0] == 1.0);
    CHECK(e.estimate[0] == 4.0);
}

TEST_CASE("kalman gain reaches the steady-state fixed point") {
    const double eps = 0.0187, vs = 0.014;
    // Predicted variance X solves X^2 - eps X - eps vs = 0.
    const double x = 0.5 * (eps + std::sqrt(eps * eps + 4.0 * eps * vs));
    const double k_star = x / (x + vs);
    RewardFilterState f = RewardFilterState::make(QTable::Zero(1), 1.0);
    RewardSample obs;
    obs.indices = {0};
    obs.values = {0.0};
    for (int k = 0; k < 200; ++k) f = kalman_update(f, obs, eps, vs);
    CHECK(std::abs(f.gain[0] - k_star) < 1e-12);
}

TEST_CASE("variance shrinks under observation") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int k = 0; k < 100; ++k) {
        RewardFilterState f = RewardFilterState::make(QTable::Zero(4), u(rng));
        predict_variance(f, u(rng));
        const Eigen::ArrayXd predicted = f.variance;
        RewardSample obs;
        obs.indices = {0, 2};
        obs.values = {1.0, 1.0};
        correct_variance(f, obs, u(rng));
        CHECK((f.variance <= predicted).all());
        CHECK(f.variance[1] == predicted[1]);
    }
}

TEST_CASE("adjacency weights") {
    const int n_q = 10;
    RewardSample s;
    s.indices = {3};
    s.values = {1.0};
    std::vector<AgentMessage> msgs{message(0, s, {0.4})};
    const std::vector<int> self{0};
    auto A = build_adjacency(0, self, msgs, n_q);
    CHECK(A.row_sums()[3] == doctest::Approx(1.0));
    CHECK(A.row_sums()[2] == 0.0);
    CHECK(contraction_rate(A) == 0.0);

    msgs.push_back(message(1, s, {0.4}));
    const std::vector<int> both{0, 1};
    A = build_adjacency(0, both, msgs, n_q);
    REQUIRE(A.blocks.size() == 2);
    CHECK(A.blocks[0].weights[0] == doctest::Approx(0.5));
    CHECK(A.blocks[1].weights[0] == doctest::Approx(0.5));

    // Agent 1 is outside the radius of agent 0.
    const std::vector<Position> pos{Position(0, 0), Position(1, 0)};
    A = build_adjacency(0, pos, 0.5, msgs, n_q);
    CHECK(A.blocks.size() == 1);
    CHECK(A.row_sums()[3] == doctest::Approx(1.0));
    // The radius is strict.
    A = build_adjacency(0, pos, 1.0, msgs, n_q);
    CHECK(A.blocks.size() == 1);

    const QTable R = QTable::Constant(n_q, 7.0);
    const std::vector<int> nobody{};
    CHECK(distributed_reward_update(R, msgs, build_adjacency(0, nobody, msgs, n_q)) == R);
}

TEST_CASE("full observability gives unit contraction") {
    const int n_q = 6;
    std::mt19937_64 rng(3);
    std::vector<AgentMessage> msgs;
    for (int j = 0; j < 3; ++j) msgs.push_back(message(j, full_sample(QTable::Zero(n_q), 0.0, rng), std::vector<double>(n_q, 0.3 + j)));
    const std::vector<int> all{0, 1, 2};
    const auto A = build_adjacency(0, all, msgs, n_q);
    CHECK(contraction_rate(A) == doctest::Approx(1.0).epsilon(1e-12));

    ContractionWindow w(3);
    CHECK(w.mean() == 0.0);
    for (double v : {1.0, 0.0, 0.5, 0.25}) w.push(v);
    CHECK(w.count() == 3);
    CHECK(w.mean() == doctest::Approx(0.25));
}

TEST_CASE("random adjacency properties") {
    const int n_q = 20, n_agents = 6;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0), val(-3.0, 3.0);
    std::bernoulli_distribution obs(0.4);
    const QTable truth = QTable::NullaryExpr(n_q, [&] { return val(rng); });
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<AgentMessage> msgs;
        for (int j = 0; j < n_agents; ++j) {
            RewardSample s;
            std::vector<double> g;
            for (int q = 0; q < n_q; ++q)
                if (obs(rng)) {
                    s.indices.push_back(q);
                    s.values.push_back(truth[q]);
                    g.push_back(u(rng) < 0.1 ? 0.0 : u(rng));
                }
            msgs.push_back(message(j, s, g));
        }
        std::vector<int> neighbors;
        for (int j = 0; j < n_agents; ++j)
            if (j == 0 || obs(rng)) neighbors.push_back(j);
        const auto A = build_adjacency(0, neighbors, msgs, n_q);
        const Eigen::ArrayXd sums = A.row_sums();
        for (int q = 0; q < n_q; ++q) CHECK((std::abs(sums[q] - 1.0) <= 1e-12 || sums[q] == 0.0));
        const double lam = contraction_rate(A);
        CHECK(lam >= 0.0);
        CHECK(lam <= 1.0 + 1e-12);

        // Noiseless samples of a static reward contract the error.
        const QTable R = truth + QTable::NullaryExpr(n_q, [&] { return val(rng); });
        const QTable next = distributed_reward_update(R, msgs, A);
        CHECK((next - truth).cwiseAbs().maxCoeff() <= (1.0 - lam) * (R - truth).cwiseAbs().maxCoeff() + 1e-12);

        // Noisy samples: the result stays inside the interval hull.
        std::vector<AgentMessage> noisy = msgs;
        for (auto& m : noisy)
            for (double& v : m.sample.values) v += val(rng);
        const QTable hull = distributed_reward_update(R, noisy, A);
        for (int q = 0; q < n_q; ++q) {
            double lo = R[q], hi = R[q];
            for (const auto& m : noisy)
                for (std::size_t k = 0; k < m.sample.size(); ++k)
                    if (m.sample.indices[k] == q) {
                        lo = std::min(lo, m.sample.values[k]);
                        hi = std::max(hi, m.sample.values[k]);
                    }
            CHECK(hull[q] >= lo - 1e-12);
            CHECK(hull[q] <= hi + 1e-12);
        }
    }
}

TEST_CASE("central update") {
    const QTable R = QTable::Constant(4, 1.0);
    CHECK(central_reward_update(R, {}, {}) == R);
    RewardSample s;
    s.indices = {1, 3};
    s.values = {5.0, -2.0};
    const std::vector<RewardSample> samples{s};
    const std::vector<std::vector<double>> gains{{1.0, 1.0}};
    const QTable out = central_reward_update(R, samples, gains);
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 5.0);
    CHECK(out[3] == -2.0);

    // m equal observations of one element: per-sample gain P / (m P + noise).
    RewardFilterState f = RewardFilterState::make(QTable::Zero(2), 0.3);
    RewardSample one;
    one.indices = {0};
    one.values = {0.0};
    const std::vector<RewardSample> three{one, one, one};
    const auto fused = fuse_gains(f, three, 0.1);
    for (const auto& g : fused) CHECK(g[0] == doctest::Approx(0.3 / (3 * 0.3 + 0.1)));
    CHECK(f.variance[0] == doctest::Approx(1.0 / (1.0 / 0.3 + 3.0 / 0.1)));
    CHECK(f.variance[1] == 0.3);
}

namespace {

struct StaticRun {
    double central_mse = 0.0;
    double distributed_mse = 0.0;
    double distributed_max_err = 0.0;
};

/// Four agents in mutual range, each sampling every element every step.
StaticRun static_reward_run(std::uint64_t seed, int steps) {
    const int n_q = 45, n_agents = 4;
    const double eps = 0.0187, vs = 0.014;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> val(-3.0, 0.0);
    const QTable truth = QTable::NullaryExpr(n_q, [&] { return val(rng); });

    RewardFilterState central = RewardFilterState::make(QTable::Zero(n_q), vs);
    std::vector<QTable> agentR(n_agents, QTable::Zero(n_q));
    std::vector<Eigen::ArrayXd> agentP(n_agents, Eigen::ArrayXd::Constant(n_q, vs));
    const std::vector<int> all{0, 1, 2, 3};
    StaticRun out;
    int tail = 0;
    for (int t = 0; t < steps; ++t) {
        std::vector<RewardSample> samples;
        std::vector<AgentMessage> msgs;
        for (int j = 0; j < n_agents; ++j) {
            samples.push_back(full_sample(truth, vs, rng));
            agentP[j] += eps;
            msgs.push_back(message(j, samples.back(), observe_gains(agentP[j], samples.back(), vs)));
        }
        predict_variance(central, eps);
        const auto gains = fuse_gains(central, samples, vs);
        central.estimate = central_reward_update(central.estimate.matrix(), samples, gains).array();
        for (int i = 0; i < n_agents; ++i)
            agentR[i] = distributed_reward_update(agentR[i], msgs, build_adjacency(i, all, msgs, n_q));
        if (t >= steps / 2) {
            out.central_mse += (central.estimate.matrix() - truth).squaredNorm() / n_q;
            out.distributed_mse += (agentR[0] - truth).squaredNorm() / n_q;
            ++tail;
        }
    }
    out.central_mse /= tail;
    out.distributed_mse /= tail;
    for (const auto& R : agentR) out.distributed_max_err = std::max(out.distributed_max_err, (R - truth).cwiseAbs().maxCoeff());
    return out;
}

}  // namespace

TEST_CASE("static reward convergence") {
    const auto run = static_reward_run(1, 200);
    CHECK(run.distributed_max_err < 5.0 * std::sqrt(0.014));

    double central = 0.0, distributed = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto r = static_reward_run(100 + seed, 200);
        central += r.central_mse;
        distributed += r.distributed_mse;
    }
    CHECK(central <= distributed);
}

TEST_CASE("filter trajectories are deterministic") {
    const auto a = static_reward_run(9, 30), b = static_reward_run(9, 30);
    CHECK(a.central_mse == b.central_mse);
    CHECK(a.distributed_mse == b.distributed_mse);
}
