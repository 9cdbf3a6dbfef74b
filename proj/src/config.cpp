#include "htd2/config.hpp"

#include "htd2/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

namespace htd2 {

std::string_view to_string(Dispatcher d) noexcept {
    switch (d) {
        case Dispatcher::htd2: return "HTD2";
        case Dispatcher::ctd: return "CTD";
        case Dispatcher::dtd: return "DTD";
        case Dispatcher::bellman: return "BELLMAN";
        case Dispatcher::rhc: return "RHC";
        case Dispatcher::none: return "NONE";
    }
    return "?";
}

namespace {

std::string upper(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_number(const std::string& key, std::string_view s) {
    s = trim(s);
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || std::isnan(v))
        throw ConfigError(key + ": expected a number, got '" + std::string(s) + "'");
    return v;
}

long long parse_integer(const std::string& key, std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError(key + ": expected an integer, got '" + std::string(s) + "'");
    return v;
}

bool parse_bool(const std::string& key, std::string_view s) {
    const std::string u = upper(trim(s));
    if (u == "TRUE" || u == "1" || u == "YES" || u == "ON") return true;
    if (u == "FALSE" || u == "0" || u == "NO" || u == "OFF") return false;
    throw ConfigError(key + ": expected true or false, got '" + std::string(s) + "'");
}

struct Field {
    std::string key;
    std::function<void(ScenarioConfig&, const std::string&)> set;
    std::function<std::string(const ScenarioConfig&)> get;
};

template <typename Access>
Field real(std::string key, Access access) {
    return {key,
            [key, access](ScenarioConfig& c, const std::string& v) { access(c) = parse_number(key, v); },
            [access](const ScenarioConfig& c) { return format_double(access(c)); }};
}

template <typename Access>
Field integer(std::string key, Access access) {
    return {key,
            [key, access](ScenarioConfig& c, const std::string& v) {
                using T = std::remove_reference_t<decltype(access(c))>;
                const long long x = parse_integer(key, v);
                if constexpr (std::is_unsigned_v<T>) {
                    if (x < 0) throw ConfigError(key + ": must be >= 0");
                } else {
                    if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max())
                        throw ConfigError(key + ": value out of range");
                }
                access(c) = static_cast<T>(x);
            },
            [access](const ScenarioConfig& c) { return std::to_string(access(c)); }};
}

template <typename Access>
Field boolean(std::string key, Access access) {
    return {key, [key, access](ScenarioConfig& c, const std::string& v) { access(c) = parse_bool(key, v); },
            [access](const ScenarioConfig& c) {
                return std::string(access(c) ? "true" : "false");
            }};
}

template <typename Access>
Field text(std::string key, Access access) {
    return {key, [access](ScenarioConfig& c, const std::string& v) { access(c) = v; },
            [access](const ScenarioConfig& c) { return access(c); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        using C = ScenarioConfig;
        std::vector<Field> f;
        f.push_back(integer("map.width", [](auto& c) -> auto& { return c.map.width; }));
        f.push_back(integer("map.height", [](auto& c) -> auto& { return c.map.height; }));
        f.push_back(real("map.cell_size", [](auto& c) -> auto& { return c.map.cell_size; }));
        f.push_back(real("map.origin_x", [](auto& c) -> auto& { return c.map.origin_x; }));
        f.push_back(real("map.origin_y", [](auto& c) -> auto& { return c.map.origin_y; }));
        f.push_back(text("map.mask_file", [](auto& c) -> auto& { return c.map.mask_file; }));
        f.push_back(integer("fleet.size", [](auto& c) -> auto& { return c.fleet.size; }));
        f.push_back(real("fleet.speed", [](auto& c) -> auto& { return c.fleet.speed; }));
        f.push_back(text("fleet.init_file", [](auto& c) -> auto& { return c.fleet.init_file; }));
        f.push_back(real("sim.t0", [](auto& c) -> auto& { return c.sim.t0; }));
        f.push_back(real("sim.tf", [](auto& c) -> auto& { return c.sim.tf; }));
        f.push_back(real("sim.dt", [](auto& c) -> auto& { return c.sim.dt; }));
        f.push_back(integer("sim.seed", [](auto& c) -> auto& { return c.sim.seed; }));
        f.push_back(boolean("sim.trace_q", [](auto& c) -> auto& { return c.sim.trace_q; }));
        f.push_back({"dispatcher", [](C& c, const std::string& v) { c.dispatcher = parse_dispatcher(v); },
                     [](const C& c) { return std::string(to_string(c.dispatcher)); }});
        f.push_back(real("policy.gamma", [](auto& c) -> auto& { return c.policy.gamma; }));
        f.push_back(real("policy.alpha", [](auto& c) -> auto& { return c.policy.alpha; }));
        f.push_back(integer("policy.n_T", [](auto& c) -> auto& { return c.policy.n_T; }));
        f.push_back(real("policy.delta_d_fraction", [](auto& c) -> auto& { return c.policy.delta_d_fraction; }));
        f.push_back(integer("policy.mpi_sweeps", [](auto& c) -> auto& { return c.policy.mpi_sweeps; }));
        f.push_back(real("policy.mpi_tol", [](auto& c) -> auto& { return c.policy.mpi_tol; }));
        f.push_back(integer("policy.mpi_max_sweeps", [](auto& c) -> auto& { return c.policy.mpi_max_sweeps; }));
        f.push_back(real("estimation.varsigma", [](auto& c) -> auto& { return c.estimation.varsigma; }));
        f.push_back(real("estimation.epsilon", [](auto& c) -> auto& { return c.estimation.epsilon; }));
        f.push_back(real("estimation.r_comm", [](auto& c) -> auto& { return c.estimation.r_comm; }));
        f.push_back({"estimation.prior",
                     [](C& c, const std::string& v) {
                         const std::string u = upper(v);
                         if (u == "OBSERVED") c.estimation.prior = PriorModel::observed;
                         else if (u == "GLOBAL") c.estimation.prior = PriorModel::global;
                         else throw ConfigError("estimation.prior: expected observed or global, got '" + v + "'");
                     },
                     [](const C& c) {
                         return std::string(c.estimation.prior == PriorModel::observed ? "observed" : "global");
                     }});
        f.push_back(boolean("estimation.trace", [](auto& c) -> auto& { return c.estimation.trace; }));
        f.push_back(real("assignment.beta", [](auto& c) -> auto& { return c.assignment.beta; }));
        f.push_back(real("assignment.tau", [](auto& c) -> auto& { return c.assignment.tau; }));
        f.push_back(integer("assignment.k_stable", [](auto& c) -> auto& { return c.assignment.k_stable; }));
        f.push_back(integer("assignment.cap_factor", [](auto& c) -> auto& { return c.assignment.cap_factor; }));
        f.push_back(boolean("assignment.normalize_omega_star",
                            [](auto& c) -> auto& { return c.assignment.normalize_omega_star; }));
        f.push_back(boolean("assignment.trace", [](auto& c) -> auto& { return c.assignment.trace; }));
        f.push_back(integer("rhc.horizon", [](auto& c) -> auto& { return c.rhc.horizon; }));
        f.push_back(real("rhc.bin_width", [](auto& c) -> auto& { return c.rhc.bin_width; }));
        f.push_back({"demand.source",
                     [](C& c, const std::string& v) {
                         const std::string u = upper(v);
                         if (u == "GMM") c.demand.source = DemandSource::gmm;
                         else if (u == "DATASET") c.demand.source = DemandSource::dataset;
                         else throw ConfigError("demand.source: expected gmm or dataset, got '" + v + "'");
                     },
                     [](const C& c) { return std::string(c.demand.source == DemandSource::gmm ? "gmm" : "dataset"); }});
        f.push_back(integer("demand.n_c", [](auto& c) -> auto& { return c.demand.n_c; }));
        f.push_back(integer("demand.n_components", [](auto& c) -> auto& { return c.demand.n_components; }));
        f.push_back(real("demand.speed", [](auto& c) -> auto& { return c.demand.speed; }));
        f.push_back(real("demand.sigma", [](auto& c) -> auto& { return c.demand.sigma; }));
        f.push_back(text("dataset.path", [](auto& c) -> auto& { return c.dataset.path; }));
        f.push_back(text("dataset.train_path", [](auto& c) -> auto& { return c.dataset.train_path; }));
        f.push_back(real("dataset.t_start", [](auto& c) -> auto& { return c.dataset.t_start; }));
        f.push_back(real("dataset.t_end", [](auto& c) -> auto& { return c.dataset.t_end; }));
        return f;
    }();
    return table;
}

bool needs_quotes(const std::string& v) {
    if (v.empty()) return true;
    return std::any_of(v.begin(), v.end(), [](char c) { return c == '#' || c == '"' || std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

Dispatcher parse_dispatcher(std::string_view name) {
    const std::string u = upper(trim(name));
    if (u == "HTD2" || u == "H-TD2") return Dispatcher::htd2;
    if (u == "CTD" || u == "C-TD") return Dispatcher::ctd;
    if (u == "DTD" || u == "D-TD") return Dispatcher::dtd;
    if (u == "BELLMAN") return Dispatcher::bellman;
    if (u == "RHC") return Dispatcher::rhc;
    if (u == "NONE") return Dispatcher::none;
    throw ConfigError("dispatcher: unknown variant '" + std::string(name) + "'");
}

MapSpec ScenarioConfig::map_spec() const {
    MapSpec m;
    m.width = map.width;
    m.height = map.height;
    m.cell_size = map.cell_size;
    m.origin = Position(map.origin_x, map.origin_y);
    if (!map.mask_file.empty()) m.mask = load_mask_file(map.mask_file, map.width, map.height);
    return m;
}

long ScenarioConfig::n_steps() const {
    // Small epsilon so tf - t0 = k dt exactly gives k steps despite rounding.
    return static_cast<long>(std::ceil((sim.tf - sim.t0) / sim.dt - 1e-9));
}

KeyValues parse_key_values(std::istream& in, const std::string& name) {
    KeyValues out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view row = line;
        // Strip comments outside quotes.
        bool quoted = false;
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (row[k] == '"') quoted = !quoted;
            if (row[k] == '#' && !quoted) {
                row = row.substr(0, k);
                break;
            }
        }
        row = trim(row);
        if (row.empty()) continue;
        const auto eq = row.find('=');
        if (eq == std::string_view::npos)
            throw ParseError(name + ": line " + std::to_string(line_no) + ": expected 'key = value'", line_no);
        const std::string key(trim(row.substr(0, eq)));
        std::string_view value = trim(row.substr(eq + 1));
        if (key.empty()) throw ParseError(name + ": line " + std::to_string(line_no) + ": empty key", line_no);
        if (!value.empty() && value.front() == '"') {
            if (value.size() < 2 || value.back() != '"')
                throw ParseError(name + ": line " + std::to_string(line_no) + ": unterminated string", line_no);
            value = value.substr(1, value.size() - 2);
        }
        out.emplace_back(key, std::string(value));
    }
    return out;
}

void apply_setting(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : fields())
        if (f.key == key) {
            f.set(cfg, value);
            return;
        }
    throw ConfigError("unknown configuration key: " + key);
}

std::pair<std::string, std::string> split_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value, got '" + text + "'");
    std::string value(trim(std::string_view(text).substr(eq + 1)));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    return {std::string(trim(std::string_view(text).substr(0, eq))), value};
}

ScenarioConfig config_from_string(const std::string& text, const std::string& name) {
    std::istringstream in(text);
    ScenarioConfig cfg;
    for (const auto& [k, v] : parse_key_values(in, name)) apply_setting(cfg, k, v);
    return cfg;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    ScenarioConfig cfg;
    for (const auto& [k, v] : parse_key_values(in, path)) apply_setting(cfg, k, v);
    return cfg;
}

KeyValues to_key_values(const ScenarioConfig& cfg) {
    KeyValues out;
    for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
    return out;
}

std::string to_config_text(const ScenarioConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : to_key_values(cfg)) out += k + " = " + (needs_quotes(v) ? "\"" + v + "\"" : v) + "\n";
    return out;
}

std::vector<std::string> known_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

void validate(const ScenarioConfig& c) {
    auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
    if (c.map.width < 1) fail("map.width", "must be >= 1");
    if (c.map.height < 1) fail("map.height", "must be >= 1");
    if (!(c.map.cell_size > 0.0)) fail("map.cell_size", "must be > 0");
    if (c.fleet.size < 1) fail("fleet.size", "must be >= 1");
    if (!(c.fleet.speed > 0.0)) fail("fleet.speed", "must be > 0");
    if (!(c.sim.tf > c.sim.t0)) fail("sim.tf", "must be greater than sim.t0");
    if (!(c.sim.dt > 0.0)) fail("sim.dt", "must be > 0");
    if (!(c.policy.gamma > 0.0 && c.policy.gamma < 1.0)) fail("policy.gamma", "must lie in (0, 1)");
    if (!(c.policy.alpha > 0.0 && c.policy.alpha <= 1.0)) fail("policy.alpha", "must lie in (0, 1]");
    if (c.policy.n_T < 1) fail("policy.n_T", "must be >= 1");
    if (!(c.policy.delta_d_fraction >= 0.0)) fail("policy.delta_d_fraction", "must be >= 0");
    if (c.policy.mpi_sweeps < 1) fail("policy.mpi_sweeps", "must be >= 1");
    if (!(c.policy.mpi_tol > 0.0)) fail("policy.mpi_tol", "must be > 0");
    if (c.policy.mpi_max_sweeps < 1) fail("policy.mpi_max_sweeps", "must be >= 1");
    if (!(c.estimation.varsigma >= 0.0)) fail("estimation.varsigma", "must be >= 0");
    if (!(c.estimation.epsilon >= 0.0)) fail("estimation.epsilon", "must be >= 0");
    if (!(c.estimation.r_comm >= 0.0)) fail("estimation.r_comm", "must be >= 0 (0 selects three cell widths)");
    if (!(c.assignment.beta >= 0.0)) fail("assignment.beta", "must be >= 0");
    if (!(c.assignment.tau > 0.0)) fail("assignment.tau", "must be > 0");
    if (c.assignment.k_stable < 1) fail("assignment.k_stable", "must be >= 1");
    if (c.assignment.cap_factor < 1) fail("assignment.cap_factor", "must be >= 1");
    if (c.rhc.horizon < 1) fail("rhc.horizon", "must be >= 1");
    if (!(c.rhc.bin_width > 0.0)) fail("rhc.bin_width", "must be > 0");
    if (c.demand.n_c < 0) fail("demand.n_c", "must be >= 0");
    if (c.demand.n_components < 1) fail("demand.n_components", "must be >= 1");
    if (!(c.demand.speed >= 0.0)) fail("demand.speed", "must be >= 0");
    if (!(c.demand.sigma > 0.0)) fail("demand.sigma", "must be > 0");
    if (c.demand.source == DemandSource::dataset) {
        if (c.dataset.path.empty()) fail("dataset.path", "required when demand.source = dataset");
        if (!(c.dataset.t_end > c.dataset.t_start)) fail("dataset.t_end", "must be greater than dataset.t_start");
    }
}

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) { return to_key_values(a) == to_key_values(b); }

}  // namespace htd2
