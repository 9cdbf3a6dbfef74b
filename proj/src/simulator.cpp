#include "htd2/simulator.hpp"

#include "htd2/errors.hpp"
#include "htd2/policy.hpp"
#include "htd2/rhc.hpp"
#include "htd2/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace htd2 {

double waiting_time(const CustomerRequest& c, double t_assign, const Position& taxi_pos, double speed) {
    return (t_assign - c.t_request) + eta(taxi_pos, c.pickup, speed);
}

std::vector<Match> match_customers(std::deque<PendingRequest>& queue, std::span<TaxiState> taxis, double t_step,
                                   double speed) {
    std::vector<Match> out;
    std::vector<int> free_ids;
    for (const auto& taxi : taxis)
        if (taxi.is_free()) free_ids.push_back(taxi.id);

    std::deque<PendingRequest> left;
    while (!queue.empty()) {
        PendingRequest p = std::move(queue.front());
        queue.pop_front();
        if (free_ids.empty()) {
            p.carried = true;
            left.push_back(std::move(p));
            continue;
        }
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < free_ids.size(); ++k) {
            const double d = (taxis[free_ids[k]].position - p.request.pickup).squaredNorm();
            // free_ids is ascending, so strict < keeps the lowest id on ties.
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        TaxiState& taxi = taxis[free_ids[best]];
        free_ids.erase(free_ids.begin() + static_cast<std::ptrdiff_t>(best));

        const double t_assign = p.carried ? t_step : p.request.t_request;
        Match m;
        m.request = p.id;
        m.taxi = taxi.id;
        m.t_assign = t_assign;
        m.wait = waiting_time(p.request, t_assign, taxi.position, speed);
        out.push_back(m);

        Service s;
        s.customer = p.id;
        s.leg.start = taxi.position;
        s.leg.t_start = t_assign;
        s.leg.t_pickup = t_assign + eta(taxi.position, p.request.pickup, speed);
        s.pickup = p.request.pickup;
        s.dropoff = p.request.dropoff;
        s.duration = p.request.t_duration;
        taxi.service = s;
        taxi.mode = TaxiMode::servicing;
        taxi.dispatch_target.reset();
    }
    queue = std::move(left);
    return out;
}

void advance_taxi(TaxiState& taxi, double t, double dt, double speed) {
    const double t1 = t + dt;
    if (taxi.mode == TaxiMode::servicing) {
        const Service& s = *taxi.service;
        if (s.t_dropoff() <= t1) {
            taxi.position = s.dropoff;
            taxi.mode = TaxiMode::free;
            taxi.service.reset();
        } else {
            taxi.position = step_servicing_taxi(s.leg, s.pickup, s.dropoff, s.duration, std::max(t1, s.leg.t_start));
        }
        return;
    }
    if (taxi.dispatch_target) taxi.position = step_dispatched_taxi(taxi.position, *taxi.dispatch_target, dt, speed);
}

QTable reward_prior(const std::vector<CustomerRequest>& training, const StateSpace& space, double speed,
                    PriorModel model) {
    const int n = space.n_states();
    QTable R = QTable::Zero(space.n_q());
    if (training.empty()) return R;
    Eigen::VectorXd to_demand(n);
    for (int s = 0; s < n; ++s) {
        const Position c = space.centroid(s);
        double sum = 0.0;
        for (const auto& r : training) sum += eta(c, r.pickup, speed);
        to_demand[s] = sum / static_cast<double>(training.size());
    }
    for (int s = 0; s < n; ++s)
        for (Action a : kAllActions) {
            const int next = space.transition(s, a);
            R[StateSpace::index(s, a)] = -(eta(space.centroid(s), space.centroid(next), speed) + to_demand[next]);
        }
    if (model == PriorModel::global) return R;

    // Observed: where training pickups exist, the noiseless sample of a taxi
    // standing at each pickup, averaged per cell.
    Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(space.n_q());
    Eigen::ArrayXi count = Eigen::ArrayXi::Zero(n);
    for (const auto& r : training) {
        const auto s = space.try_cell_of(r.pickup);
        if (!s) continue;
        ++count[*s];
        for (Action a : kAllActions)
            sum[StateSpace::index(*s, a)] -= 2.0 * eta(r.pickup, space.centroid(space.transition(*s, a)), speed);
    }
    for (int s = 0; s < n; ++s)
        if (count[s] > 0)
            for (int a = 0; a < kNumActions; ++a)
                R[s * kNumActions + a] = sum[s * kNumActions + a] / static_cast<double>(count[s]);
    return R;
}

std::vector<Position> load_fleet_positions(const std::string& path, const StateSpace& space) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open fleet init file: " + path);
    std::vector<Position> out;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (!header) {
            if (line.rfind("x,y", 0) != 0)
                throw ParseError(path + ": line " + std::to_string(line_no) + ": expected header 'x,y'", line_no);
            header = true;
            continue;
        }
        std::istringstream ls(line);
        double x = 0.0, y = 0.0;
        char comma = 0;
        if (!(ls >> x >> comma >> y) || comma != ',')
            throw ParseError(path + ": line " + std::to_string(line_no) + ": expected 'x,y'", line_no);
        const Position p(x, y);
        if (!space.try_cell_of(p))
            throw ConfigError(path + ": line " + std::to_string(line_no) + ": position outside valid cells");
        out.push_back(p);
    }
    return out;
}

namespace {

bool has_policy(Dispatcher d) {
    return d == Dispatcher::htd2 || d == Dispatcher::ctd || d == Dispatcher::dtd || d == Dispatcher::bellman;
}

bool has_agents(Dispatcher d) { return d == Dispatcher::htd2 || d == Dispatcher::dtd || d == Dispatcher::bellman; }

int locate(const StateSpace& space, const Position& p) {
    const auto s = space.try_cell_of(p);
    return s ? *s : space.nearest_state(p);
}

double relative_error(const QTable& reference, const QTable& q) {
    const double ref = reference.norm();
    const double diff = (reference - q).norm();
    if (ref > 0.0) return diff / ref;
    return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

}  // namespace

ScenarioInputs prepare_inputs(const ScenarioConfig& cfg) {
    validate(cfg);
    ScenarioInputs in{StateSpace(cfg.map_spec()), {}, {}, {}, {}};
    const StateSpace& space = in.space;
    const double dt = cfg.sim.dt;
    const double speed = cfg.fleet.speed;
    Rng training_rng = make_stream(cfg.sim.seed, Stream::training);
    Rng fleet_rng = make_stream(cfg.sim.seed, Stream::fleet_init);

    if (cfg.demand.source == DemandSource::gmm) {
        const GmmParams params{cfg.demand.n_components, cfg.demand.speed, cfg.demand.sigma};
        GmmState g = make_gmm(params, space, training_rng);
        for (long k = 0; k < cfg.n_steps(); ++k) {
            auto batch = sample_requests(g, cfg.demand.n_c, cfg.sim.t0 + k * dt, dt, space, speed, training_rng);
            in.training.insert(in.training.end(), batch.begin(), batch.end());
            g = gmm_step(g, dt);
        }
    } else {
        auto load = load_dataset(cfg.dataset.path, cfg.dataset.t_start, cfg.dataset.t_end, space);
        in.replay = std::move(load.requests);
        in.warnings.insert(in.warnings.end(), load.warnings.begin(), load.warnings.end());
        if (cfg.dataset.train_path.empty()) {
            in.training = in.replay;
        } else {
            auto train = load_dataset(cfg.dataset.train_path, cfg.dataset.t_start, cfg.dataset.t_end, space);
            in.training = std::move(train.requests);
            in.warnings.insert(in.warnings.end(), train.warnings.begin(), train.warnings.end());
        }
    }

    const int n_taxis = cfg.fleet.size;
    in.taxis.resize(static_cast<std::size_t>(n_taxis));
    if (!cfg.fleet.init_file.empty()) {
        const auto positions = load_fleet_positions(cfg.fleet.init_file, space);
        if (static_cast<int>(positions.size()) != n_taxis)
            throw ConfigError("fleet.init_file: expected " + std::to_string(n_taxis) + " positions, got " +
                              std::to_string(positions.size()));
        for (int i = 0; i < n_taxis; ++i) in.taxis[i].position = positions[i];
    } else {
        for (auto& taxi : in.taxis) taxi.position = sample_valid_area(space, fleet_rng);
    }
    for (int i = 0; i < n_taxis; ++i) in.taxis[i].id = i;
    return in;
}

DemandHistogram rhc_histogram(const ScenarioConfig& cfg, const ScenarioInputs& inputs) {
    const double span = cfg.sim.tf - cfg.sim.t0 + cfg.rhc.horizon * cfg.sim.dt;
    const int bins = static_cast<int>(std::ceil(span / cfg.rhc.bin_width - 1e-9));
    return train_demand_model(inputs.training, cfg.rhc.bin_width, inputs.space, cfg.sim.t0, bins);
}

Eigen::MatrixXd rhc_demand_slice(const DemandHistogram& histogram, double t, double dt, int horizon, int n_states) {
    Eigen::MatrixXd slice(horizon + 1, n_states);
    for (int h = 0; h <= horizon; ++h) slice.row(h) = histogram.at(t + h * dt).transpose();
    return slice;
}

Metrics simulate(const ScenarioConfig& cfg, const StepObserver& observer, const AgentObserver& agent_observer) {
    const auto wall_start = std::chrono::steady_clock::now();
    ScenarioInputs inputs = prepare_inputs(cfg);
    const StateSpace& space = inputs.space;
    const double speed = cfg.fleet.speed;
    const double dt = cfg.sim.dt;
    const long n_steps = cfg.n_steps();
    const Dispatcher variant = cfg.dispatcher;
    const std::uint64_t seed = cfg.sim.seed;
    const double varsigma = cfg.estimation.varsigma;
    const double epsilon = cfg.estimation.epsilon;
    const double r_comm = cfg.comm_radius();
    const int n_q = space.n_q();
    const int n_taxis = cfg.fleet.size;

    Rng demand_rng = make_stream(seed, Stream::demand);
    Rng noise_rng = make_stream(seed, Stream::noise);
    Rng assign_rng = make_stream(seed, Stream::assignment);
    Rng point_rng = make_stream(seed, Stream::dispatch_point);

    Metrics m;
    m.variant = std::string(to_string(variant));
    m.seed = seed;
    m.warnings = inputs.warnings;

    std::optional<GmmState> gmm;
    if (cfg.demand.source == DemandSource::gmm)
        gmm = make_gmm(GmmParams{cfg.demand.n_components, cfg.demand.speed, cfg.demand.sigma}, space, demand_rng);
    const std::vector<CustomerRequest>& replay = inputs.replay;
    std::size_t replay_next = 0;
    const std::vector<CustomerRequest>& training = inputs.training;
    std::vector<TaxiState>& taxis = inputs.taxis;

    // Policy state.
    const MdpSpec mdp(space, cfg.policy.gamma);
    const MpiOptions mpi{cfg.policy.mpi_sweeps, cfg.policy.mpi_tol, cfg.policy.mpi_max_sweeps};
    const QTable R0 = reward_prior(training, space, speed, cfg.estimation.prior);
    const bool policy = has_policy(variant);
    const bool agents = has_agents(variant);
    QTable Qb0;
    if (policy) {
        try {
            Qb0 = bellman_mpi(R0, mdp, mpi);
        } catch (const ConvergenceError& e) {
            throw SimulationError(std::string("initial policy (before step 0): ") + e.what(), -1);
        }
        m.q0_norm = Qb0.norm();
    }
    m.delta_d_fraction = cfg.policy.delta_d_fraction;
    switch (variant) {
        case Dispatcher::dtd: m.delta_d = std::numeric_limits<double>::infinity(); break;
        case Dispatcher::bellman: m.delta_d = 0.0; break;
        default: m.delta_d = cfg.policy.delta_d_fraction * m.q0_norm; break;
    }
    HybridConfig hybrid;
    hybrid.delta_d = m.delta_d;
    hybrid.alpha = cfg.policy.alpha;
    hybrid.process_variance = epsilon;
    hybrid.noise_variance = varsigma;
    hybrid.n_T = cfg.policy.n_T;
    hybrid.n_q = n_q;
    hybrid.mpi = mpi;

    RewardFilterState central = RewardFilterState::make(R0, varsigma);
    QTable Rc = R0;
    QTable Qc = Qb0;
    std::vector<QTable> agent_q, agent_r;
    std::vector<Eigen::ArrayXd> agent_p;
    std::vector<ContractionWindow> windows;
    if (agents) {
        agent_q.assign(static_cast<std::size_t>(n_taxis), Qb0);
        agent_r.assign(static_cast<std::size_t>(n_taxis), R0);
        agent_p.assign(static_cast<std::size_t>(n_taxis), Eigen::ArrayXd::Constant(n_q, varsigma));
        windows.assign(static_cast<std::size_t>(n_taxis), ContractionWindow(cfg.policy.n_T));
    }

    DemandHistogram histogram;
    if (variant == Dispatcher::rhc) histogram = rhc_histogram(cfg, inputs);

    BlllOptions blll;
    blll.tau = cfg.assignment.tau;
    blll.k_stable = cfg.assignment.k_stable;
    blll.cap_factor = cfg.assignment.cap_factor;
    blll.r_comm = r_comm;
    blll.trace = cfg.assignment.trace;

    std::deque<PendingRequest> queue;
    std::vector<CustomerRequest> requests;
    QTable Qb_prev = Qb0;
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    double step_total = 0.0;

    for (long k = 0; k < n_steps; ++k) {
        const double t = cfg.sim.t0 + k * dt;
        const auto step_start = std::chrono::steady_clock::now();
        StepRecord rec;
        rec.t = t;
        rec.err_rel = rec.err_rel_pre = rec.delta_e = rec.qb_drift = rec.drift_limit = nan;
        try {
            // (1) injection
            std::vector<CustomerRequest> batch;
            if (gmm) {
                batch = sample_requests(*gmm, cfg.demand.n_c, t, dt, space, speed, demand_rng);
                *gmm = gmm_step(*gmm, dt);
            } else {
                while (replay_next < replay.size() && replay[replay_next].t_request < t + dt)
                    batch.push_back(replay[replay_next++]);
            }
            for (const auto& c : batch) {
                queue.push_back({static_cast<int>(requests.size()), c, c.t_request < t});
                requests.push_back(c);
            }
            rec.injected = static_cast<int>(batch.size());
            m.injected += rec.injected;

            // (2) matching; positions are still those at time t
            std::vector<Position> start_positions;
            start_positions.reserve(taxis.size());
            for (const auto& taxi : taxis) start_positions.push_back(taxi.position);
            const auto matches = match_customers(queue, taxis, t, speed);
            rec.matched = static_cast<int>(matches.size());
            m.matched += rec.matched;
            for (const auto& mt : matches) {
                m.cumulative_wait += mt.wait;
                m.customers.push_back({mt.request, requests[mt.request].t_request, mt.t_assign, mt.taxi, mt.wait});
            }

            // (3) observations and estimation
            std::vector<RewardSample> samples;
            if (policy) {
                samples.reserve(matches.size());
                for (const auto& mt : matches)
                    samples.push_back(build_observation(requests[mt.request], start_positions[mt.taxi], space, speed,
                                                        varsigma, noise_rng));
                predict_variance(central, epsilon);
                const auto gains = fuse_gains(central, samples, varsigma);
                Rc = central_reward_update(Rc, samples, gains);
                central.estimate = Rc.array();
            }
            std::vector<double> lambda_bar;
            if (agents) {
                for (auto& p : agent_p) p += epsilon;
                std::vector<AgentMessage> messages;
                std::vector<Position> observer_pos;
                messages.reserve(matches.size());
                for (std::size_t j = 0; j < matches.size(); ++j) {
                    const int a = matches[j].taxi;
                    messages.push_back({a, samples[j], observe_gains(agent_p[a], samples[j], varsigma)});
                    observer_pos.push_back(start_positions[a]);
                }
                const SpatialIndex observers(space, observer_pos);
                lambda_bar.resize(static_cast<std::size_t>(n_taxis));
                for (int i = 0; i < n_taxis; ++i) {
                    double lambda = 0.0;
                    if (!messages.empty()) {
                        const auto ids = observers.within(start_positions[i], r_comm);
                        if (!ids.empty()) {
                            const auto A = build_adjacency_from_messages(i, messages, ids, n_q);
                            agent_r[i] = distributed_reward_update(agent_r[i], messages, A);
                            lambda = contraction_rate(A);
                        }
                    }
                    windows[i].push(lambda);
                    lambda_bar[i] = windows[i].mean();
                    if (cfg.estimation.trace)
                        m.estimator_trace.push_back({t, i, lambda, (agent_r[i] - Rc).cwiseAbs().maxCoeff()});
                }
            }

            // (4) policy update
            QTable Qb_t;
            const QTable* shared_q = nullptr;
            if (policy) {
                Qb_t = bellman_mpi(Rc, mdp, mpi);
                rec.qb_drift = (Qb_t - Qb_prev).norm();
                if (agents) {
                    const double lam = *std::min_element(lambda_bar.begin(), lambda_bar.end());
                    rec.drift_limit = (1.0 - cfg.policy.gamma) * (1.0 - std::sqrt(1.0 - lam));
                }
                auto worst_error = [&]() {
                    if (!agents) return relative_error(Qb_t, Qc);
                    double e = 0.0;
                    for (const auto& q : agent_q) e = std::max(e, relative_error(Qb_t, q));
                    return e;
                };
                rec.err_rel_pre = worst_error();
                if (agents) {
                    const auto outcome = hybrid_step(agent_q, agent_r, lambda_bar, Rc, hybrid, mdp, &Qb_t);
                    rec.triggered = outcome.triggered;
                    rec.delta_e = outcome.max_delta_e;
                    if (outcome.triggered) {
                        ++m.triggers;
                        shared_q = &Qb_t;
                    }
                } else {
                    Qc = td_update(Qc, Rc, mdp, cfg.policy.alpha);
                    shared_q = &Qc;
                }
                rec.err_rel = worst_error();
                if (agents && agent_observer) agent_observer(k, agent_q, lambda_bar);
                Qb_prev = Qb_t;
            }

            // (5) assignment of free taxis, in ascending id order
            std::vector<int> free_ids;
            for (const auto& taxi : taxis)
                if (taxi.is_free()) free_ids.push_back(taxi.id);
            rec.n_free = static_cast<int>(free_ids.size());
            rec.n_queued = static_cast<int>(queue.size());
            std::vector<int> cells;
            std::vector<Position> positions;
            for (int id : free_ids) {
                cells.push_back(locate(space, taxis[id].position));
                positions.push_back(taxis[id].position);
            }
            if (policy && !free_ids.empty()) {
                const bool normalize = cfg.assignment.normalize_omega_star;
                std::vector<Eigen::VectorXd> omega_stars;
                std::vector<int> omega_of;
                Eigen::VectorXd phi_reference;
                if (shared_q) {
                    omega_stars.push_back(desired_distribution(*shared_q, cfg.assignment.beta, normalize));
                } else {
                    phi_reference = Eigen::VectorXd::Zero(space.n_states());
                    for (int id : free_ids) {
                        omega_of.push_back(static_cast<int>(omega_stars.size()));
                        omega_stars.push_back(desired_distribution(agent_q[id], cfg.assignment.beta, normalize));
                        phi_reference += omega_stars.back();
                    }
                    phi_reference /= static_cast<double>(free_ids.size());
                }
                BlllInput in;
                in.cells = cells;
                in.positions = positions;
                in.omega_stars = omega_stars;
                in.omega_of = omega_of;
                in.phi_reference = shared_q ? nullptr : &phi_reference;
                const auto result = blll_assign(in, space, blll, assign_rng);
                if (result.truncated) ++m.blll_truncations;
                for (const auto& row : result.trace) m.assignment_trace.push_back({k, row});
                for (std::size_t f = 0; f < free_ids.size(); ++f)
                    taxis[free_ids[f]].dispatch_target =
                        action_to_dispatch(cells[f], result.profile[f], space, point_rng);
            } else if (variant == Dispatcher::rhc && !free_ids.empty()) {
                const auto slice = rhc_demand_slice(histogram, t, dt, cfg.rhc.horizon, space.n_states());
                const auto targets =
                    rhc_dispatch(cells, slice, cfg.policy.gamma, cfg.rhc.horizon, space, point_rng);
                for (std::size_t f = 0; f < free_ids.size(); ++f) taxis[free_ids[f]].dispatch_target = targets[f];
            }

            // (6) kinematics
            for (auto& taxi : taxis) advance_taxi(taxi, t, dt, speed);
        } catch (const SimulationError&) {
            throw;
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "step " << k << " (t = " << t << "): " << e.what();
            throw SimulationError(msg.str(), k);
        }

        // (7) metrics
        rec.cum_wait = m.cumulative_wait;
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - step_start).count();
        step_total += rec.wall_seconds;
        m.steps.push_back(rec);
        if (observer) observer(m.steps.back(), taxis, queue.size());
    }
    m.queued_at_end = static_cast<long>(queue.size());
    m.mean_step_seconds = n_steps > 0 ? step_total / static_cast<double>(n_steps) : 0.0;
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return m;
}

}  // namespace htd2
