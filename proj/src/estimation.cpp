#include "htd2/estimation.hpp"

#include "htd2/errors.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace htd2 {

RewardFilterState RewardFilterState::make(const QTable& initial, double initial_variance) {
    RewardFilterState f;
    f.estimate = initial.array();
    f.variance = Eigen::ArrayXd::Constant(initial.size(), initial_variance);
    f.gain = Eigen::ArrayXd::Zero(initial.size());
    return f;
}

double reward_mean(const Position& taxi_pos, const Position& u, const Position& pickup, double speed) {
    return -(eta(taxi_pos, u, speed) + eta(u, pickup, speed));
}

double reward_sample_value(const Position& taxi_pos, const Position& u, const Position& pickup, double speed,
                           double noise_variance, Rng& rng) {
    if (noise_variance < 0.0) throw ConfigError("measurement variance must be >= 0");
    const double mean = reward_mean(taxi_pos, u, pickup, speed);
    if (noise_variance == 0.0) return mean;
    std::normal_distribution<double> noise(0.0, std::sqrt(noise_variance));
    return mean + noise(rng);
}

RewardSample build_observation(const CustomerRequest& request, const Position& taxi_pos, const StateSpace& space,
                               double speed, double noise_variance, Rng& rng) {
    const auto cell = space.try_cell_of(taxi_pos);
    const int s = cell ? *cell : space.nearest_state(taxi_pos);
    RewardSample r;
    r.indices.reserve(kNumActions);
    r.values.reserve(kNumActions);
    for (Action a : kAllActions) {
        const Position u = space.centroid(space.transition(s, a));
        r.indices.push_back(StateSpace::index(s, a));
        r.values.push_back(reward_sample_value(taxi_pos, u, request.pickup, speed, noise_variance, rng));
    }
    return r;
}

void predict_variance(RewardFilterState& f, double process_variance) {
    if (process_variance < 0.0) throw ConfigError("process variance must be >= 0");
    f.variance += process_variance;
    f.gain.setZero();
}

std::vector<double> observe_gains(Eigen::ArrayXd& variance, const RewardSample& obs, double noise_variance) {
    if (noise_variance < 0.0) throw ConfigError("measurement variance must be >= 0");
    std::vector<double> gains;
    gains.reserve(obs.size());
    for (int q : obs.indices) {
        const double denom = variance[q] + noise_variance;
        const double k = denom > 0.0 ? variance[q] / denom : 1.0;
        gains.push_back(k);
        variance[q] = (1.0 - k) * variance[q];
    }
    return gains;
}

void correct_variance(RewardFilterState& f, const RewardSample& obs, double noise_variance) {
    const auto gains = observe_gains(f.variance, obs, noise_variance);
    for (std::size_t k = 0; k < obs.size(); ++k) f.gain[obs.indices[k]] = gains[k];
}

RewardFilterState kalman_update(RewardFilterState f, const RewardSample& obs, double process_variance,
                                double noise_variance) {
    predict_variance(f, process_variance);
    correct_variance(f, obs, noise_variance);
    for (std::size_t k = 0; k < obs.size(); ++k) {
        const int q = obs.indices[k];
        f.estimate[q] += f.gain[q] * (obs.values[k] - f.estimate[q]);
    }
    return f;
}

std::vector<std::vector<double>> fuse_gains(RewardFilterState& f, std::span<const RewardSample> samples,
                                            double noise_variance) {
    if (noise_variance < 0.0) throw ConfigError("measurement variance must be >= 0");
    const int n = f.size();
    Eigen::ArrayXi hits = Eigen::ArrayXi::Zero(n);
    for (const auto& s : samples)
        for (int q : s.indices) ++hits[q];

    Eigen::ArrayXd per_sample = Eigen::ArrayXd::Zero(n);
    for (int q = 0; q < n; ++q) {
        if (hits[q] == 0) continue;
        const double m = hits[q];
        const double denom = m * f.variance[q] + noise_variance;
        per_sample[q] = denom > 0.0 ? f.variance[q] / denom : 1.0 / m;
        f.gain[q] = m * per_sample[q];
        f.variance[q] = denom > 0.0 ? f.variance[q] * noise_variance / denom : 0.0;
    }

    std::vector<std::vector<double>> gains;
    gains.reserve(samples.size());
    for (const auto& s : samples) {
        std::vector<double> g;
        g.reserve(s.size());
        for (int q : s.indices) g.push_back(per_sample[q]);
        gains.push_back(std::move(g));
    }
    return gains;
}

QTable central_reward_update(const QTable& R, std::span<const RewardSample> samples,
                             std::span<const std::vector<double>> gains) {
    assert(samples.size() == gains.size());
    QTable innovation = QTable::Zero(R.size());
    for (std::size_t j = 0; j < samples.size(); ++j)
        for (std::size_t k = 0; k < samples[j].size(); ++k) {
            const int q = samples[j].indices[k];
            innovation[q] += gains[j][k] * (samples[j].values[k] - R[q]);
        }
    return R + innovation;
}

Eigen::ArrayXd AdjacencyBlocks::row_sums() const {
    Eigen::ArrayXd sums = Eigen::ArrayXd::Zero(n_q);
    for (const auto& b : blocks)
        for (std::size_t k = 0; k < b.indices.size(); ++k) sums[b.indices[k]] += b.weights[k];
    return sums;
}

AdjacencyBlocks build_adjacency_from_messages(int agent, std::span<const AgentMessage> messages,
                                              std::span<const int> message_ids, int n_q) {
    AdjacencyBlocks A;
    A.agent = agent;
    A.n_q = n_q;
    for (int m : message_ids) A.neighbor_set.push_back(messages[m].agent);
    std::sort(A.neighbor_set.begin(), A.neighbor_set.end());
    A.neighbor_set.erase(std::unique(A.neighbor_set.begin(), A.neighbor_set.end()), A.neighbor_set.end());
    if (message_ids.empty()) return A;

    // Denominator sum_j K^j H^j per element, accumulated on the touched support only.
    std::vector<std::pair<int, double>> denom;
    for (int m : message_ids) {
        const auto& msg = messages[m];
        for (std::size_t k = 0; k < msg.sample.size(); ++k) denom.emplace_back(msg.sample.indices[k], msg.gain[k]);
    }
    std::sort(denom.begin(), denom.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<int, double>> total;
    for (const auto& [q, g] : denom) {
        if (total.empty() || total.back().first != q) total.emplace_back(q, 0.0);
        total.back().second += g;
    }
    auto total_of = [&](int q) {
        const auto it = std::lower_bound(total.begin(), total.end(), q,
                                         [](const auto& e, int key) { return e.first < key; });
        return it->second;
    };
    for (int m : message_ids) {
        const auto& msg = messages[m];
        NeighborBlock b;
        b.message = m;
        b.agent = msg.agent;
        for (std::size_t k = 0; k < msg.sample.size(); ++k) {
            const int q = msg.sample.indices[k];
            const double d = total_of(q);
            if (!(d > 0.0) || msg.gain[k] == 0.0) continue;
            b.indices.push_back(q);
            b.weights.push_back(msg.gain[k] / d);
        }
        if (!b.indices.empty()) A.blocks.push_back(std::move(b));
    }
    return A;
}

AdjacencyBlocks build_adjacency(int agent, std::span<const int> neighbors, std::span<const AgentMessage> messages,
                                int n_q) {
    std::vector<int> sorted(neighbors.begin(), neighbors.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> ids;
    for (int m = 0; m < static_cast<int>(messages.size()); ++m)
        if (std::binary_search(sorted.begin(), sorted.end(), messages[m].agent)) ids.push_back(m);
    AdjacencyBlocks A = build_adjacency_from_messages(agent, messages, ids, n_q);
    A.neighbor_set = std::move(sorted);
    return A;
}

AdjacencyBlocks build_adjacency(int agent, std::span<const Position> positions, double r_comm,
                                std::span<const AgentMessage> messages, int n_q) {
    if (!(r_comm > 0.0)) throw ConfigError("communication radius must be > 0");
    std::vector<int> neighbors;
    const Position& p = positions[agent];
    for (int j = 0; j < static_cast<int>(positions.size()); ++j)
        if (j == agent || (positions[j] - p).norm() < r_comm) neighbors.push_back(j);
    return build_adjacency(agent, neighbors, messages, n_q);
}

QTable distributed_reward_update(const QTable& R, std::span<const AgentMessage> messages, const AdjacencyBlocks& A) {
    QTable delta = QTable::Zero(R.size());
    for (const auto& b : A.blocks) {
        const auto& sample = messages[b.message].sample;
        // Block indices are a subsequence of the sample's indices.
        std::size_t k = 0;
        for (std::size_t e = 0; e < b.indices.size(); ++e) {
            const int q = b.indices[e];
            while (sample.indices[k] != q) ++k;
            delta[q] += b.weights[e] * (sample.values[k] - R[q]);
        }
    }
    return R + delta;
}

double contraction_rate(const AdjacencyBlocks& A) {
    if (A.n_q == 0) return 0.0;
    std::size_t support = 0;
    for (const auto& b : A.blocks) support += b.indices.size();
    if (support < static_cast<std::size_t>(A.n_q)) return 0.0;
    const Eigen::ArrayXd sums = A.row_sums();
    return std::clamp(sums.minCoeff(), 0.0, 1.0);
}

ContractionWindow::ContractionWindow(int n_T) {
    if (n_T < 1) throw ConfigError("contraction window n_T must be >= 1");
    ring_.assign(static_cast<std::size_t>(n_T), 0.0);
}

void ContractionWindow::push(double lambda) {
    ring_[next_] = lambda;
    next_ = (next_ + 1) % ring_.size();
    filled_ = std::min(filled_ + 1, ring_.size());
}

double ContractionWindow::mean() const noexcept {
    if (filled_ == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t k = 0; k < filled_; ++k) sum += ring_[k];
    return sum / static_cast<double>(filled_);
}

}  // namespace htd2
