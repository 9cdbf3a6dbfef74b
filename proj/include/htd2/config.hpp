#pragma once

#include "htd2/geometry.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace htd2 {

enum class Dispatcher { htd2, ctd, dtd, bellman, rhc, none };

std::string_view to_string(Dispatcher d) noexcept;
/// Accepts HTD2, CTD, DTD, BELLMAN, RHC, NONE (case-insensitive).
Dispatcher parse_dispatcher(std::string_view name);

enum class DemandSource { gmm, dataset };

/// How the reward prior is built from training requests (see reward_prior).
enum class PriorModel { observed, global };

/// Every tunable of one scenario. Defaults are the small-scale gridworld.
struct ScenarioConfig {
    struct Map {
        int width = 17;
        int height = 5;
        double cell_size = 0.1;
        double origin_x = 0.0;
        double origin_y = 0.0;
        std::string mask_file;
    } map;
    struct Fleet {
        int size = 100;
        double speed = 0.125;
        /// Optional `x,y` CSV of initial positions, one taxi per row.
        std::string init_file;
    } fleet;
    struct Sim {
        double t0 = 0.0;
        double tf = 100.0;
        double dt = 1.0;
        std::uint64_t seed = 0;
        bool trace_q = false;
    } sim;
    Dispatcher dispatcher = Dispatcher::htd2;
    struct Policy {
        double gamma = 0.9;
        double alpha = 0.75;
        int n_T = 10;
        double delta_d_fraction = 0.025;
        int mpi_sweeps = 20;
        double mpi_tol = 1e-8;
        long mpi_max_sweeps = 100000;
    } policy;
    struct Estimation {
        double varsigma = 0.014;
        double epsilon = 0.0187;
        /// 0 means three cell widths.
        double r_comm = 0.0;
        PriorModel prior = PriorModel::observed;
        bool trace = false;
    } estimation;
    struct Assignment {
        double beta = 150.0;
        double tau = 1e-4;
        int k_stable = 10;
        int cap_factor = 50;
        bool normalize_omega_star = false;
        bool trace = false;
    } assignment;
    struct Rhc {
        int horizon = 10;
        double bin_width = 1.0;
    } rhc;
    struct Demand {
        DemandSource source = DemandSource::gmm;
        int n_c = 5;
        int n_components = 2;
        double speed = 0.02625;
        double sigma = 0.014;
    } demand;
    struct Dataset {
        std::string path;
        /// Training requests for the reward prior and the demand histogram;
        /// empty means the replay file itself.
        std::string train_path;
        double t_start = 0.0;
        double t_end = 0.0;
    } dataset;

    MapSpec map_spec() const;
    double comm_radius() const { return estimation.r_comm > 0.0 ? estimation.r_comm : 3.0 * map.cell_size; }
    long n_steps() const;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped,
/// values may be double-quoted. Throws ParseError naming the line.
KeyValues parse_key_values(std::istream& in, const std::string& name);

/// Applies one assignment; unknown keys and bad values throw ConfigError.
void apply_setting(ScenarioConfig& cfg, const std::string& key, const std::string& value);

/// `key=value` as given on the command line.
std::pair<std::string, std::string> split_override(const std::string& text);

ScenarioConfig load_config(const std::string& path);
ScenarioConfig config_from_string(const std::string& text, const std::string& name = "<string>");

/// All keys, in a fixed order, with values that parse back to the same config.
KeyValues to_key_values(const ScenarioConfig& cfg);
std::string to_config_text(const ScenarioConfig& cfg);
std::vector<std::string> known_keys();

/// Range checks; throws ConfigError naming the key.
void validate(const ScenarioConfig& cfg);

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b);

}  // namespace htd2
