#pragma once

#include "htd2/config.hpp"
#include "htd2/simulator.hpp"

#include <iosfwd>
#include <string>

namespace htd2 {

/// Shortest round-trip text for a double; "nan", "inf", "-inf" otherwise.
std::string format_number(double v);

/// Summary: totals, trigger count and the effective parameters. Deterministic
/// for a fixed seed; wall-clock goes to write_timing_json.
void write_metrics_json(std::ostream& out, const Metrics& m, const ScenarioConfig& cfg);

/// Run and per-step wall-clock seconds.
void write_timing_json(std::ostream& out, const Metrics& m);

/// `t,cum_wait,n_free,n_queued,err_rel,delta_e,triggered`
void write_timeseries_csv(std::ostream& out, const Metrics& m);

/// Every StepRecord field, including the pre-update error.
void write_step_detail_csv(std::ostream& out, const Metrics& m);

/// `t,variant,err_rel,delta_e,triggered`
void write_policy_trace_csv(std::ostream& out, const Metrics& m);

/// `id,t_request,t_assign,taxi,wait`
void write_customers_csv(std::ostream& out, const Metrics& m);

/// `t,agent,lambda,err_inf`
void write_estimator_trace_csv(std::ostream& out, const Metrics& m);

/// `round,taxi,J_current,J_alt,switched,phi`
void write_assignment_trace_csv(std::ostream& out, const Metrics& m);

}  // namespace htd2
