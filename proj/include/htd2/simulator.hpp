#pragma once

#include "htd2/assignment.hpp"
#include "htd2/config.hpp"
#include "htd2/demand.hpp"
#include "htd2/estimation.hpp"
#include "htd2/geometry.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace htd2 {

enum class TaxiMode { free, servicing };

struct Service {
    int customer = -1;
    ServiceLeg leg;
    Position pickup = Position::Zero();
    Position dropoff = Position::Zero();
    double duration = 0.0;

    double t_dropoff() const noexcept { return leg.t_pickup + duration; }
};

/// Kinematic state of one taxi. Learning state (Q-table, reward filter) is
/// kept by the simulator in per-agent arrays indexed by `id`.
struct TaxiState {
    int id = 0;
    Position position = Position::Zero();
    TaxiMode mode = TaxiMode::free;
    std::optional<Service> service;
    std::optional<Position> dispatch_target;

    bool is_free() const noexcept { return mode == TaxiMode::free; }
};

/// A request waiting for a taxi. `carried` marks requests left over from an
/// earlier step; they are assigned at the step time instead of their
/// request time.
struct PendingRequest {
    int id = 0;
    CustomerRequest request;
    bool carried = false;
};

struct Match {
    int request = 0;
    int taxi = 0;
    double t_assign = 0.0;
    double wait = 0.0;
};

/// (t_assign - t_request) + eta(taxi position at assignment, pickup).
double waiting_time(const CustomerRequest& c, double t_assign, const Position& taxi_pos, double speed);

/// Greedy matching in queue order: each request takes the nearest free taxi
/// (lowest id on ties). Matched requests leave the queue and their taxis
/// switch to servicing; the rest stay queued and are marked carried.
std::vector<Match> match_customers(std::deque<PendingRequest>& queue, std::span<TaxiState> taxis, double t_step,
                                   double speed);

/// Advances one taxi from t to t + dt. Servicing taxis follow their trip and
/// become free at the dropoff once it is reached; free taxis head for their
/// dispatch target, if any.
void advance_taxi(TaxiState& taxi, double t, double dt, double speed);

/// Reward prior from training requests; zero when there are none.
/// global: -(eta(c_s, c_s') + mean_k eta(c_s', pickup_k)) with s' = transition(s, a).
/// observed: in cells holding training pickups, the mean noiseless sample of a
/// taxi at each such pickup, -2 eta(pickup, c_s'); global elsewhere.
QTable reward_prior(const std::vector<CustomerRequest>& training, const StateSpace& space, double speed,
                    PriorModel model = PriorModel::observed);

struct StepRecord {
    double t = 0.0;
    double cum_wait = 0.0;
    int n_free = 0;
    int n_queued = 0;
    int injected = 0;
    int matched = 0;
    /// Relative policy error after the policy update (NaN without a policy).
    double err_rel = 0.0;
    /// The same error measured before the update.
    double err_rel_pre = 0.0;
    double delta_e = 0.0;
    bool triggered = false;
    /// Timescale diagnostic: |Q^b_t - Q^b_{t-1}| (Q^b_{-1} = Q^b_0) against
    /// (1 - gamma)(1 - sqrt(1 - min lambda_bar)). NaN where undefined.
    double qb_drift = 0.0;
    double drift_limit = 0.0;
    double wall_seconds = 0.0;
};

struct CustomerRecord {
    int id = 0;
    double t_request = 0.0;
    double t_assign = 0.0;
    int taxi = 0;
    double wait = 0.0;
};

struct EstimatorTraceRow {
    double t = 0.0;
    int agent = 0;
    double lambda = 0.0;
    double err_inf = 0.0;
};

struct AssignmentTraceRow {
    long round = 0;
    BlllTraceRow row;
};

struct Metrics {
    std::string variant;
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;
    std::vector<CustomerRecord> customers;
    double cumulative_wait = 0.0;
    long triggers = 0;
    long injected = 0;
    long matched = 0;
    long queued_at_end = 0;
    long blll_truncations = 0;
    double delta_d = 0.0;
    double delta_d_fraction = 0.0;
    double q0_norm = 0.0;
    double wall_seconds = 0.0;
    double mean_step_seconds = 0.0;
    std::vector<std::string> warnings;
    std::vector<EstimatorTraceRow> estimator_trace;
    std::vector<AssignmentTraceRow> assignment_trace;
};

/// Scenario pieces fixed before the first step: the map, the initial fleet,
/// the replay requests (dataset source) and the training requests behind the
/// reward prior and the demand histogram.
struct ScenarioInputs {
    StateSpace space;
    std::vector<TaxiState> taxis;
    std::vector<CustomerRequest> replay;
    std::vector<CustomerRequest> training;
    std::vector<std::string> warnings;
};

ScenarioInputs prepare_inputs(const ScenarioConfig& cfg);

/// Expected-demand histogram over [t0, tf + horizon * dt) from the training requests.
DemandHistogram rhc_histogram(const ScenarioConfig& cfg, const ScenarioInputs& inputs);

/// Demand slice for the RHC program at time t: row h is the forecast for t + h dt.
Eigen::MatrixXd rhc_demand_slice(const DemandHistogram& histogram, double t, double dt, int horizon, int n_states);

/// Called after every step with the step record and the fleet at the end of
/// the step.
using StepObserver = std::function<void(const StepRecord&, std::span<const TaxiState>, std::size_t queued)>;

/// Called after the policy update of every step in the agent variants
/// (HTD2, DTD) with each agent's Q-table and its windowed contraction rate.
using AgentObserver =
    std::function<void(long step, std::span<const QTable> agent_q, std::span<const double> lambda_bar)>;

/// Runs the fleet loop for one scenario. Deterministic given cfg.sim.seed.
/// Module errors are rethrown as SimulationError naming the step.
Metrics simulate(const ScenarioConfig& cfg, const StepObserver& observer = {},
                 const AgentObserver& agent_observer = {});

/// Positions from an `x,y` CSV (header required).
std::vector<Position> load_fleet_positions(const std::string& path, const StateSpace& space);

}  // namespace htd2
