#include "htd2/cli.hpp"

#include "htd2/errors.hpp"
#include "htd2/policy.hpp"
#include "htd2/report.hpp"
#include "htd2/rhc.hpp"
#include "htd2/simulator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

namespace htd2 {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_commas(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    for (;;) {
        const auto next = text.find(',', pos);
        out.push_back(trim(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

std::uint64_t parse_seed(std::string_view s, std::string_view whole) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("bad seed list '" + std::string(whole) + "'");
    return v;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
    std::vector<std::uint64_t> out;
    for (auto item : split_commas(text)) {
        const auto dots = item.find("..");
        if (dots == std::string_view::npos) {
            out.push_back(parse_seed(item, text));
            continue;
        }
        const auto lo = parse_seed(trim(item.substr(0, dots)), text);
        const auto hi = parse_seed(trim(item.substr(dots + 2)), text);
        if (hi < lo) throw ConfigError("bad seed range '" + std::string(item) + "'");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
    return out;
}

std::vector<Dispatcher> parse_variant_list(std::string_view text) {
    std::vector<Dispatcher> out;
    for (auto item : split_commas(text)) out.push_back(parse_dispatcher(item));
    return out;
}

std::vector<double> parse_value_list(std::string_view text) {
    std::vector<double> out;
    for (auto item : split_commas(text)) {
        double v = 0.0;
        const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || p != item.data() + item.size() || !std::isfinite(v))
            throw ConfigError("bad value list '" + std::string(text) + "'");
        out.push_back(v);
    }
    return out;
}

unsigned pool_size(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("HTD2_THREADS")) {
        const std::string_view s(env);
        unsigned v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc() && p == s.data() + s.size() && v > 0) n = v;
    }
    return static_cast<unsigned>(std::clamp<std::size_t>(jobs, 1, n));
}

namespace {

struct CommonArgs {
    std::string config;
    std::string seeds;
    std::string out;
    std::vector<std::string> sets;
    bool trace_q = false;
    bool force = false;
};

void add_common(CLI::App& sub, CommonArgs& a, bool out_required) {
    sub.add_option("config", a.config, "Scenario file (key = value lines)")->required();
    sub.add_option("--seed,--seeds", a.seeds, "Seed list, e.g. 0..4 or 1,3,7");
    auto* out = sub.add_option("--out", a.out, "Output location");
    if (out_required) out->required();
    sub.add_option("--set", a.sets, "Override key=value (repeatable)")->allow_extra_args(false);
    sub.add_flag("--trace-q", a.trace_q, "Record the per-step policy error trace");
    sub.add_flag("--force", a.force, "Overwrite existing outputs");
}

struct Scenario {
    std::string snapshot;  ///< raw bytes of the config file
    KeyValues overrides;
    ScenarioConfig cfg;
    std::vector<std::uint64_t> seeds;
};

Scenario load_scenario(const CommonArgs& a) {
    Scenario sc;
    std::ifstream in(a.config, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + a.config);
    std::ostringstream buf;
    buf << in.rdbuf();
    sc.snapshot = buf.str();
    sc.cfg = config_from_string(sc.snapshot, a.config);
    for (const auto& s : a.sets) {
        auto kv = split_override(s);
        apply_setting(sc.cfg, kv.first, kv.second);
        sc.overrides.push_back(std::move(kv));
    }
    if (a.trace_q) sc.cfg.sim.trace_q = true;
    validate(sc.cfg);
    sc.seeds = a.seeds.empty() ? std::vector<std::uint64_t>{sc.cfg.sim.seed} : parse_seed_list(a.seeds);
    if (sc.seeds.empty()) throw ConfigError("empty seed list");
    return sc;
}

void prepare_out_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw ConfigError("output path is not a directory: " + dir.string());
        if (!fs::is_empty(dir) && !force)
            throw ConfigError("output directory is not empty: " + dir.string() + " (use --force to overwrite)");
    }
    fs::create_directories(dir);
}

void check_out_file(const fs::path& file, bool force) {
    if (fs::exists(file) && !force)
        throw ConfigError("output file exists: " + file.string() + " (use --force to overwrite)");
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::ofstream open_out(const fs::path& file) {
    std::ofstream f(file, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + file.string());
    return f;
}

struct Job {
    ScenarioConfig cfg;
    fs::path dir;  ///< relative to the output root
    json tags;
    Metrics metrics;
    std::vector<std::string> files;
};

void write_job(const fs::path& root, Job& job) {
    const fs::path dir = root / job.dir;
    fs::create_directories(dir);
    auto emit = [&](const char* name, auto&& writer) {
        auto f = open_out(dir / name);
        writer(f);
        job.files.push_back((job.dir / name).generic_string());
    };
    emit("metrics.json", [&](std::ostream& o) { write_metrics_json(o, job.metrics, job.cfg); });
    emit("timeseries.csv", [&](std::ostream& o) { write_timeseries_csv(o, job.metrics); });
    emit("steps.csv", [&](std::ostream& o) { write_step_detail_csv(o, job.metrics); });
    emit("customers.csv", [&](std::ostream& o) { write_customers_csv(o, job.metrics); });
    emit("timing.json", [&](std::ostream& o) { write_timing_json(o, job.metrics); });
    if (job.cfg.sim.trace_q) emit("policy_trace.csv", [&](std::ostream& o) { write_policy_trace_csv(o, job.metrics); });
    if (job.cfg.estimation.trace)
        emit("estimator_trace.csv", [&](std::ostream& o) { write_estimator_trace_csv(o, job.metrics); });
    if (job.cfg.assignment.trace)
        emit("assignment_trace.csv", [&](std::ostream& o) { write_assignment_trace_csv(o, job.metrics); });
}

/// Runs every job in a pool; each worker simulates and writes its own files.
/// Rethrows the failure of the lowest-numbered failing job.
void run_jobs(std::vector<Job>& jobs, const fs::path& root, std::ostream& log) {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs.size());
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            try {
                jobs[k].metrics = simulate(jobs[k].cfg);
                write_job(root, jobs[k]);
                std::lock_guard lock(log_mutex);
                log << jobs[k].dir.generic_string() << ": cumulative wait "
                    << format_number(jobs[k].metrics.cumulative_wait) << "\n";
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const unsigned n = pool_size(jobs.size());
    std::vector<std::thread> pool;
    for (unsigned i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        if (!errors[k]) continue;
        try {
            std::rethrow_exception(errors[k]);
        } catch (const SimulationError& e) {
            throw SimulationError(jobs[k].dir.generic_string() + ": " + e.what(), e.step());
        }
    }
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

json base_manifest(const std::string& verb, const Scenario& sc, const CommonArgs& a, const fs::path& root) {
    json m;
    m["tool"] = "htd2";
    m["tool_version"] = std::string(kToolVersion);
    m["verb"] = verb;
    m["config"] = a.config;
    m["config_snapshot"] = "config.snapshot";
    m["effective_config"] = "effective.cfg";
    json ov = json::array();
    for (const auto& [k, v] : sc.overrides) ov.push_back(k + "=" + v);
    m["overrides"] = ov;
    m["trace_q"] = sc.cfg.sim.trace_q;
    m["seeds"] = sc.seeds;
    m["output_dir"] = root.string();
    return m;
}

void write_common_files(const fs::path& root, const Scenario& sc) {
    open_out(root / "config.snapshot") << sc.snapshot;
    open_out(root / "effective.cfg") << to_config_text(sc.cfg);
}

void finish_manifest(json& m, const fs::path& root, const std::vector<Job>& jobs, std::vector<std::string> files) {
    json runs = json::array();
    for (const auto& job : jobs) {
        json r = job.tags;
        r["seed"] = job.cfg.sim.seed;
        r["dir"] = job.dir.generic_string();
        r["files"] = job.files;
        runs.push_back(r);
    }
    m["runs"] = runs;
    files.insert(files.begin(), {"config.snapshot", "effective.cfg"});
    m["files"] = files;
    open_out(root / "manifest.json") << m.dump(2) << "\n";
}

int cmd_run(const CommonArgs& a, std::ostream& log) {
    const Scenario sc = load_scenario(a);
    const fs::path root(a.out);
    prepare_out_dir(root, a.force);
    std::vector<Job> jobs;
    for (auto seed : sc.seeds) {
        Job j;
        j.cfg = sc.cfg;
        j.cfg.sim.seed = seed;
        j.dir = seed_dir(seed);
        j.tags["variant"] = std::string(to_string(j.cfg.dispatcher));
        jobs.push_back(std::move(j));
    }
    run_jobs(jobs, root, log);
    write_common_files(root, sc);
    json m = base_manifest("run", sc, a, root);
    finish_manifest(m, root, jobs, {});
    return exit_ok;
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

int cmd_compare(const CommonArgs& a, const std::string& variants_text, std::ostream& log) {
    const Scenario sc = load_scenario(a);
    const auto variants = parse_variant_list(variants_text);
    if (variants.size() < 2) throw ConfigError("compare needs at least two variants");
    const fs::path root(a.out);
    prepare_out_dir(root, a.force);
    std::vector<Job> jobs;
    for (auto v : variants)
        for (auto seed : sc.seeds) {
            Job j;
            j.cfg = sc.cfg;
            j.cfg.dispatcher = v;
            j.cfg.sim.seed = seed;
            j.dir = fs::path(std::string(to_string(v))) / seed_dir(seed);
            j.tags["variant"] = std::string(to_string(v));
            jobs.push_back(std::move(j));
        }
    run_jobs(jobs, root, log);

    const bool trace = sc.cfg.sim.trace_q;
    {
        auto f = open_out(root / "comparison.csv");
        f << "variant,seed,t,cum_wait";
        if (trace) f << ",err_rel,delta_e,triggered,delta_d_fraction";
        f << "\n";
        for (const auto& j : jobs)
            for (const auto& s : j.metrics.steps) {
                f << j.metrics.variant << "," << j.cfg.sim.seed << "," << format_number(s.t) << ","
                  << format_number(s.cum_wait);
                if (trace)
                    f << "," << format_number(s.err_rel) << "," << format_number(s.delta_e) << ","
                      << (s.triggered ? 1 : 0) << "," << format_number(j.cfg.policy.delta_d_fraction);
                f << "\n";
            }
    }
    {
        auto f = open_out(root / "comparison_summary.csv");
        f << "variant,n_seeds,mean_final_wait,std_final_wait,mean_triggers\n";
        for (auto v : variants) {
            std::vector<double> finals, triggers;
            for (const auto& j : jobs)
                if (j.cfg.dispatcher == v) {
                    finals.push_back(j.metrics.cumulative_wait);
                    triggers.push_back(static_cast<double>(j.metrics.triggers));
                }
            f << to_string(v) << "," << finals.size() << "," << format_number(mean_of(finals)) << ","
              << format_number(sample_std(finals)) << "," << format_number(mean_of(triggers)) << "\n";
        }
    }
    write_common_files(root, sc);
    json m = base_manifest("compare", sc, a, root);
    json vs = json::array();
    for (auto v : variants) vs.push_back(std::string(to_string(v)));
    m["variants"] = vs;
    finish_manifest(m, root, jobs, {"comparison.csv", "comparison_summary.csv"});
    return exit_ok;
}

int cmd_sweep(const CommonArgs& a, const std::string& key, const std::string& values_text, double ratio,
              std::ostream& log) {
    const Scenario sc = load_scenario(a);
    const auto values = parse_value_list(values_text);
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    const auto keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown configuration key: " + key);
    const bool couple = key == "fleet.size" && ratio > 0.0;
    const fs::path root(a.out);
    prepare_out_dir(root, a.force);

    std::vector<Job> jobs;
    for (double value : values) {
        ScenarioConfig base = sc.cfg;
        const std::string text = format_number(value);
        apply_setting(base, key, text);
        if (couple) base.demand.n_c = std::max(1, static_cast<int>(std::lround(base.fleet.size / ratio)));
        validate(base);
        for (auto seed : sc.seeds) {
            Job j;
            j.cfg = base;
            j.cfg.sim.seed = seed;
            j.dir = fs::path(key + "=" + text) / seed_dir(seed);
            j.tags["value"] = value;
            j.tags["variant"] = std::string(to_string(base.dispatcher));
            jobs.push_back(std::move(j));
        }
    }
    run_jobs(jobs, root, log);
    {
        auto f = open_out(root / "sweep.csv");
        f << "key,value,seed,variant,fleet_size,n_c,customers,cum_wait,mean_wait,wall_per_step\n";
        for (const auto& j : jobs) {
            const auto& m = j.metrics;
            const double mean_wait =
                m.matched > 0 ? m.cumulative_wait / static_cast<double>(m.matched) : std::nan("");
            f << key << "," << format_number(j.tags["value"].get<double>()) << "," << j.cfg.sim.seed << ","
              << m.variant << "," << j.cfg.fleet.size << "," << j.cfg.demand.n_c << "," << m.matched << ","
              << format_number(m.cumulative_wait) << "," << format_number(mean_wait) << ","
              << format_number(m.mean_step_seconds) << "\n";
        }
    }
    write_common_files(root, sc);
    json m = base_manifest("sweep", sc, a, root);
    m["sweep"] = {{"key", key}, {"values", values}, {"ratio", couple ? json(ratio) : json(nullptr)}};
    finish_manifest(m, root, jobs, {"sweep.csv"});
    return exit_ok;
}

/// Single-file dumps go to --out when given, else to `out`.
template <typename Writer>
void dump(const CommonArgs& a, std::ostream& out, Writer&& writer) {
    if (a.out.empty()) {
        writer(out);
        return;
    }
    const fs::path file(a.out);
    check_out_file(file, a.force);
    auto f = open_out(file);
    writer(f);
}

ScenarioConfig single_seed_config(const CommonArgs& a) {
    Scenario sc = load_scenario(a);
    if (sc.seeds.size() != 1) throw ConfigError("this command takes a single seed");
    sc.cfg.sim.seed = sc.seeds.front();
    return sc.cfg;
}

int cmd_solve_bellman(const CommonArgs& a, std::ostream& out) {
    const ScenarioConfig cfg = single_seed_config(a);
    const ScenarioInputs inputs = prepare_inputs(cfg);
    const MdpSpec mdp(inputs.space, cfg.policy.gamma);
    const QTable R = reward_prior(inputs.training, inputs.space, cfg.fleet.speed);
    const QTable Q =
        bellman_mpi(R, mdp, MpiOptions{cfg.policy.mpi_sweeps, cfg.policy.mpi_tol, cfg.policy.mpi_max_sweeps});
    dump(a, out, [&](std::ostream& o) {
        o << "state,action,x,y,reward,q\n";
        for (int s = 0; s < inputs.space.n_states(); ++s) {
            const Position c = inputs.space.centroid(s);
            for (Action act : kAllActions) {
                const int q = StateSpace::index(s, act);
                o << s << "," << to_string(act) << "," << format_number(c.x()) << "," << format_number(c.y()) << ","
                  << format_number(R[q]) << "," << format_number(Q[q]) << "\n";
            }
        }
    });
    return exit_ok;
}

int cmd_lp_dump(const CommonArgs& a, std::ostream& out) {
    const ScenarioConfig cfg = single_seed_config(a);
    const ScenarioInputs inputs = prepare_inputs(cfg);
    const StateSpace& space = inputs.space;
    std::vector<double> x0(static_cast<std::size_t>(space.n_states()), 0.0);
    for (const auto& taxi : inputs.taxis) x0[*space.try_cell_of(taxi.position)] += 1.0;
    const DemandHistogram hist = rhc_histogram(cfg, inputs);
    const auto demand = rhc_demand_slice(hist, cfg.sim.t0, cfg.sim.dt, cfg.rhc.horizon, space.n_states());
    const RhcProgram program = build_rhc_lp(x0, demand, cfg.policy.gamma, cfg.rhc.horizon, space);
    dump(a, out, [&](std::ostream& o) { write_lp(o, program); });
    return exit_ok;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Taxi fleet dispatch simulator", "htd2"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    CommonArgs args;
    auto* run = app.add_subcommand("run", "Simulate one scenario per seed");
    add_common(*run, args, true);

    auto* compare = app.add_subcommand("compare", "Run several dispatchers on shared demand");
    add_common(*compare, args, true);
    std::string variants = "BELLMAN,CTD,HTD2,DTD,RHC";
    compare->add_option("--variants", variants, "Comma-separated dispatchers")->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "Run the scenario over values of one numeric key");
    add_common(*sweep, args, true);
    std::string key, values;
    double ratio = 10.0;
    sweep->add_option("--key", key, "Configuration key to vary")->required();
    sweep->add_option("--values", values, "Comma-separated values")->required();
    sweep->add_option("--ratio", ratio, "fleet.size / demand.n_c when sweeping fleet.size (0 keeps n_c)")
        ->capture_default_str();

    auto* bellman = app.add_subcommand("solve-bellman", "Dump the Bellman solution of the reward prior as CSV");
    add_common(*bellman, args, false);

    auto* lp = app.add_subcommand("lp-dump", "Write the receding-horizon LP for the initial fleet");
    add_common(*lp, args, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (run->parsed()) return cmd_run(args, out);
        if (compare->parsed()) return cmd_compare(args, variants, out);
        if (sweep->parsed()) return cmd_sweep(args, key, values, ratio, out);
        if (bellman->parsed()) return cmd_solve_bellman(args, out);
        if (lp->parsed()) return cmd_lp_dump(args, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const SimulationError& e) {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_usage;
}

}  // namespace htd2
