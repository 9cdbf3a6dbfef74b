#include "htd2/report.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <ostream>

namespace htd2 {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

namespace {

nlohmann::json number(double v) {
    if (std::isfinite(v)) return v;
    return format_number(v);
}

}  // namespace

void write_metrics_json(std::ostream& out, const Metrics& m, const ScenarioConfig& cfg) {
    nlohmann::json j;
    j["variant"] = m.variant;
    j["seed"] = m.seed;
    j["n_steps"] = m.steps.size();
    j["cumulative_wait"] = number(m.cumulative_wait);
    j["mean_wait"] = number(m.matched > 0 ? m.cumulative_wait / static_cast<double>(m.matched) : 0.0);
    j["injected"] = m.injected;
    j["matched"] = m.matched;
    j["queued_at_end"] = m.queued_at_end;
    j["triggers"] = m.triggers;
    j["blll_truncations"] = m.blll_truncations;
    j["delta_d"] = number(m.delta_d);
    j["delta_d_fraction"] = number(m.delta_d_fraction);
    j["q0_norm"] = number(m.q0_norm);
    j["warnings"] = m.warnings;
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : to_key_values(cfg)) params[k] = v;
    j["parameters"] = params;
    out << j.dump(2) << '\n';
}

void write_timing_json(std::ostream& out, const Metrics& m) {
    nlohmann::json j;
    j["variant"] = m.variant;
    j["seed"] = m.seed;
    j["wall_seconds"] = number(m.wall_seconds);
    j["mean_step_seconds"] = number(m.mean_step_seconds);
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : m.steps) steps.push_back(number(s.wall_seconds));
    j["step_seconds"] = steps;
    out << j.dump(2) << '\n';
}

void write_timeseries_csv(std::ostream& out, const Metrics& m) {
    out << "t,cum_wait,n_free,n_queued,err_rel,delta_e,triggered\n";
    for (const auto& s : m.steps)
        out << format_number(s.t) << ',' << format_number(s.cum_wait) << ',' << s.n_free << ',' << s.n_queued << ','
            << format_number(s.err_rel) << ',' << format_number(s.delta_e) << ',' << (s.triggered ? 1 : 0) << '\n';
}

void write_step_detail_csv(std::ostream& out, const Metrics& m) {
    out << "t,cum_wait,n_free,n_queued,injected,matched,err_rel_pre,err_rel,delta_e,triggered,qb_drift,drift_limit\n";
    for (const auto& s : m.steps)
        out << format_number(s.t) << ',' << format_number(s.cum_wait) << ',' << s.n_free << ',' << s.n_queued << ','
            << s.injected << ',' << s.matched << ',' << format_number(s.err_rel_pre) << ','
            << format_number(s.err_rel) << ',' << format_number(s.delta_e) << ',' << (s.triggered ? 1 : 0) << ','
            << format_number(s.qb_drift) << ',' << format_number(s.drift_limit) << '\n';
}

void write_policy_trace_csv(std::ostream& out, const Metrics& m) {
    out << "t,variant,err_rel,delta_e,triggered\n";
    for (const auto& s : m.steps)
        out << format_number(s.t) << ',' << m.variant << ',' << format_number(s.err_rel) << ','
            << format_number(s.delta_e) << ',' << (s.triggered ? 1 : 0) << '\n';
}

void write_customers_csv(std::ostream& out, const Metrics& m) {
    out << "id,t_request,t_assign,taxi,wait\n";
    for (const auto& c : m.customers)
        out << c.id << ',' << format_number(c.t_request) << ',' << format_number(c.t_assign) << ',' << c.taxi << ','
            << format_number(c.wait) << '\n';
}

void write_estimator_trace_csv(std::ostream& out, const Metrics& m) {
    out << "t,agent,lambda,err_inf\n";
    for (const auto& r : m.estimator_trace)
        out << format_number(r.t) << ',' << r.agent << ',' << format_number(r.lambda) << ','
            << format_number(r.err_inf) << '\n';
}

void write_assignment_trace_csv(std::ostream& out, const Metrics& m) {
    out << "round,taxi,J_current,J_alt,switched,phi\n";
    for (const auto& r : m.assignment_trace)
        out << r.round << ',' << r.row.taxi << ',' << format_number(r.row.j_current) << ','
            << format_number(r.row.j_alt) << ',' << (r.row.switched ? 1 : 0) << ',' << format_number(r.row.phi)
            << '\n';
}

}  // namespace htd2
