#pragma once

#include "htd2/demand.hpp"
#include "htd2/geometry.hpp"
#include "htd2/rng.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace htd2 {

/// State-action vector of length n_q. Also holds reward vectors.
template <typename Scalar>
using QVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using QTable = QVector<double>;

/// Sparse reward measurement: `values[k]` observes entry `indices[k]`.
/// The index set is the diagonal support of the observation matrix.
struct RewardSample {
    std::vector<int> indices;
    std::vector<double> values;

    std::size_t size() const noexcept { return indices.size(); }
    bool empty() const noexcept { return indices.empty(); }
};

/// Diagonal Kalman state for one estimator. Every element is an independent
/// scalar random-walk filter.
struct RewardFilterState {
    Eigen::ArrayXd estimate;
    Eigen::ArrayXd variance;
    Eigen::ArrayXd gain;

    static RewardFilterState make(const QTable& initial, double initial_variance);
    int size() const noexcept { return static_cast<int>(estimate.size()); }
};

/// Noise-free part of a reward sample: -(eta(taxi, u) + eta(u, pickup)).
double reward_mean(const Position& taxi_pos, const Position& u, const Position& pickup, double speed);

double reward_sample_value(const Position& taxi_pos, const Position& u, const Position& pickup, double speed,
                           double noise_variance, Rng& rng);

/// Samples all five actions of the cell holding `taxi_pos`, each with the
/// destination-cell centroid as the dispatch point.
RewardSample build_observation(const CustomerRequest& request, const Position& taxi_pos, const StateSpace& space,
                               double speed, double noise_variance, Rng& rng);

/// Predict with process variance on every element.
void predict_variance(RewardFilterState& f, double process_variance);

/// Sets gains and posterior variance for the observed elements, leaving the
/// estimate untouched. Unobserved elements get zero gain.
void correct_variance(RewardFilterState& f, const RewardSample& obs, double noise_variance);

/// Scalar-filter correction on a bare variance vector: returns the gain per
/// observed index (aligned with obs.indices) and shrinks the variance.
std::vector<double> observe_gains(Eigen::ArrayXd& variance, const RewardSample& obs, double noise_variance);

/// One predict + correct cycle on the estimate.
RewardFilterState kalman_update(RewardFilterState f, const RewardSample& obs, double process_variance,
                                double noise_variance);

/// Simultaneous multi-sample correction in information form. For an element
/// observed m times the per-sample gain is P / (m P + noise). Returns the
/// per-sample gains aligned with each sample's indices; updates `f.variance`
/// and sets `f.gain` to the total gain per element. The estimate is not touched.
std::vector<std::vector<double>> fuse_gains(RewardFilterState& f, std::span<const RewardSample> samples,
                                            double noise_variance);

/// R + sum_j K^j (r^j - H^j R), elementwise.
QTable central_reward_update(const QTable& R, std::span<const RewardSample> samples,
                             std::span<const std::vector<double>> gains);

/// What an observing agent shares with its neighbors in one step.
struct AgentMessage {
    int agent = -1;
    RewardSample sample;
    std::vector<double> gain;  ///< aligned with sample.indices
};

/// Per-element weights of one neighbor's sample in agent i's fusion.
struct NeighborBlock {
    int message = -1;  ///< index into the message list the blocks were built from
    int agent = -1;
    std::vector<int> indices;
    std::vector<double> weights;
};

/// Non-zero blocks A^{ij} for one agent i. Blocks are diagonal, so each is
/// stored as (index, weight) pairs over the neighbor's observed support.
struct AdjacencyBlocks {
    int agent = -1;
    int n_q = 0;
    std::vector<int> neighbor_set;
    std::vector<NeighborBlock> blocks;

    /// sum_j A^{ij}[q] for every q.
    Eigen::ArrayXd row_sums() const;
};

/// Builds A^{ij} = B^{ij} / sum_j B^{ij} with B^{ij} = K^j H^j over the
/// neighbor set; elements with a zero denominator get all-zero weights.
/// `neighbors` is I^i (agent ids, including i); only messages from those
/// agents contribute.
AdjacencyBlocks build_adjacency(int agent, std::span<const int> neighbors, std::span<const AgentMessage> messages,
                                int n_q);

/// Same, with the contributing messages already selected by index.
AdjacencyBlocks build_adjacency_from_messages(int agent, std::span<const AgentMessage> messages,
                                              std::span<const int> message_ids, int n_q);

/// Convenience overload computing I^i = { j : |p_i - p_j| < r_comm } by scan.
AdjacencyBlocks build_adjacency(int agent, std::span<const Position> positions, double r_comm,
                                std::span<const AgentMessage> messages, int n_q);

/// R + sum_j A^{ij} (r^j - R) over supported elements.
QTable distributed_reward_update(const QTable& R, std::span<const AgentMessage> messages, const AdjacencyBlocks& A);

/// min_q sum_j A^{ij}[q]; zero as soon as one element is unsupported.
double contraction_rate(const AdjacencyBlocks& A);

/// Rolling mean of the last n contraction rates.
class ContractionWindow {
public:
    explicit ContractionWindow(int n_T);
    void push(double lambda);
    /// Mean over the samples seen so far (at most n_T); zero when empty.
    double mean() const noexcept;
    int count() const noexcept { return static_cast<int>(filled_); }

private:
    std::vector<double> ring_;
    std::size_t next_ = 0;
    std::size_t filled_ = 0;
};

}  // namespace htd2
