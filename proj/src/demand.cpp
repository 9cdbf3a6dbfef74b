#include "htd2/demand.hpp"

#include "htd2/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

namespace htd2 {

GmmState make_gmm(const GmmParams& params, const StateSpace& space, Rng& rng) {
    if (params.n_components < 1) throw ConfigError("demand.n_components must be >= 1");
    if (!(params.sigma > 0.0)) throw ConfigError("demand.sigma must be > 0");
    if (params.speed < 0.0) throw ConfigError("demand.speed must be >= 0");
    GmmState g;
    g.speed = params.speed;
    g.sigma = params.sigma;
    g.lower = space.origin();
    g.upper = space.upper_corner();
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    for (int k = 0; k < params.n_components; ++k) {
        g.means.push_back(sample_valid_area(space, rng));
        const double th = angle(rng);
        g.headings.emplace_back(std::cos(th), std::sin(th));
    }
    g.weights.assign(params.n_components, 1.0 / params.n_components);
    return g;
}

GmmState gmm_step(GmmState g, double dt) {
    const double travel = g.speed * dt;
    for (int k = 0; k < g.n_components(); ++k) {
        Position& m = g.means[k];
        Eigen::Vector2d& h = g.headings[k];
        m += travel * h;
        for (int d = 0; d < 2; ++d) {
            // Fold back into the box; repeated folds cover steps longer than the box.
            for (int guard = 0; guard < 64; ++guard) {
                if (m[d] > g.upper[d]) {
                    m[d] = 2.0 * g.upper[d] - m[d];
                    h[d] = -h[d];
                } else if (m[d] < g.lower[d]) {
                    m[d] = 2.0 * g.lower[d] - m[d];
                    h[d] = -h[d];
                } else {
                    break;
                }
            }
            if (m[d] == g.upper[d] && h[d] > 0.0 && travel > 0.0) h[d] = -h[d];
            if (m[d] == g.lower[d] && h[d] < 0.0 && travel > 0.0) h[d] = -h[d];
        }
    }
    return g;
}

namespace {

Position sample_pickup(const GmmState& g, const StateSpace& space, Rng& rng) {
    std::discrete_distribution<int> pick(g.weights.begin(), g.weights.end());
    const int k = pick(rng);
    std::normal_distribution<double> noise(0.0, g.sigma);
    Position p = g.means[k];
    for (int attempt = 0; attempt < kPickupRejectionCap; ++attempt) {
        p = g.means[k] + Position(noise(rng), noise(rng));
        if (space.try_cell_of(p)) return p;
    }
    return space.centroid(space.nearest_state(p));
}

}  // namespace

std::vector<CustomerRequest> sample_requests(const GmmState& g, int n_c, double t0, double dt,
                                             const StateSpace& space, double taxi_speed, Rng& rng) {
    std::vector<CustomerRequest> out;
    if (n_c <= 0) return out;
    out.reserve(static_cast<std::size_t>(n_c));
    std::uniform_real_distribution<double> when(t0, t0 + dt);
    for (int k = 0; k < n_c; ++k) {
        CustomerRequest c;
        c.t_request = when(rng);
        c.pickup = sample_pickup(g, space, rng);
        c.dropoff = sample_valid_area(space, rng);
        c.t_duration = eta(c.pickup, c.dropoff, taxi_speed);
        out.push_back(c);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const CustomerRequest& a, const CustomerRequest& b) { return a.t_request < b.t_request; });
    return out;
}

namespace {

constexpr std::string_view kDatasetHeader = "t_request,t_duration,pickup_x,pickup_y,dropoff_x,dropoff_y";

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

DatasetLoad load_dataset(std::istream& in, const std::string& name, double t_start, double t_end,
                         const StateSpace& space) {
    DatasetLoad result;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = trim(line);
        if (row.empty()) continue;
        if (!header_seen) {
            if (row != kDatasetHeader)
                throw ParseError(name + ": line " + std::to_string(line_no) + ": expected header '" +
                                     std::string(kDatasetHeader) + "'",
                                 line_no);
            header_seen = true;
            continue;
        }
        double f[6];
        std::size_t field = 0;
        std::size_t begin = 0;
        bool ok = true;
        while (ok) {
            const std::size_t comma = row.find(',', begin);
            const std::string_view tok = row.substr(begin, comma == std::string_view::npos ? row.npos : comma - begin);
            if (field >= 6 || !parse_double(tok, f[field])) ok = false;
            ++field;
            if (comma == std::string_view::npos) break;
            begin = comma + 1;
        }
        if (!ok || field != 6)
            throw ParseError(name + ": line " + std::to_string(line_no) + ": malformed request row", line_no);
        ++result.rows_read;
        CustomerRequest c{f[0], f[1], Position(f[2], f[3]), Position(f[4], f[5])};
        std::string why;
        if (c.t_duration < 0.0)
            why = "negative trip duration";
        else if (c.t_request < t_start || c.t_request >= t_end)
            why = "request time outside window";
        else if (!space.try_cell_of(c.pickup))
            why = "pickup outside valid cells";
        else if (!space.try_cell_of(c.dropoff))
            why = "dropoff outside valid cells";
        if (!why.empty()) {
            ++result.dropped;
            result.warnings.push_back(name + ": line " + std::to_string(line_no) + ": dropped (" + why + ")");
            continue;
        }
        result.requests.push_back(c);
    }
    if (!header_seen) throw ParseError(name + ": missing header", line_no);
    std::stable_sort(result.requests.begin(), result.requests.end(),
                     [](const CustomerRequest& a, const CustomerRequest& b) { return a.t_request < b.t_request; });
    if (result.requests.empty()) result.warnings.push_back(name + ": no requests in window");
    return result;
}

DatasetLoad load_dataset(const std::string& path, double t_start, double t_end, const StateSpace& space) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset: " + path);
    return load_dataset(in, path, t_start, t_end, space);
}

void write_dataset(std::ostream& out, const std::vector<CustomerRequest>& requests) {
    out << kDatasetHeader << '\n' << std::setprecision(17);
    for (const auto& c : requests)
        out << c.t_request << ',' << c.t_duration << ',' << c.pickup.x() << ',' << c.pickup.y() << ','
            << c.dropoff.x() << ',' << c.dropoff.y() << '\n';
}

int DemandHistogram::bin_of(double t) const noexcept {
    if (!(bin_width > 0.0)) return -1;
    const double rel = (t - origin) / bin_width;
    if (rel < 0.0) return -1;
    const auto b = static_cast<long long>(std::floor(rel));
    return b < n_bins() ? static_cast<int>(b) : -1;
}

Eigen::VectorXd DemandHistogram::at(double t) const {
    const int b = bin_of(t);
    if (b < 0) return Eigen::VectorXd::Zero(counts.cols());
    return counts.row(b).transpose();
}

DemandHistogram train_demand_model(const std::vector<CustomerRequest>& requests, double bin_width,
                                   const StateSpace& space, double origin, int n_bins, int periods) {
    if (!(bin_width > 0.0)) throw ConfigError("histogram bin width must be > 0");
    if (n_bins < 0) throw ConfigError("histogram bin count must be >= 0");
    if (periods < 1) throw ConfigError("histogram period count must be >= 1");
    DemandHistogram h;
    h.origin = origin;
    h.bin_width = bin_width;
    h.counts = Eigen::MatrixXd::Zero(n_bins, space.n_states());
    for (const auto& c : requests) {
        const int b = h.bin_of(c.t_request);
        const auto s = space.try_cell_of(c.pickup);
        if (b < 0 || !s) continue;
        h.counts(b, *s) += 1.0;
    }
    h.counts /= static_cast<double>(periods);
    return h;
}

void write_histogram_csv(std::ostream& out, const DemandHistogram& h) {
    out << "bin_start,cell_index,count\n" << std::setprecision(17);
    for (int b = 0; b < h.n_bins(); ++b)
        for (int s = 0; s < h.counts.cols(); ++s) out << h.bin_start(b) << ',' << s << ',' << h.counts(b, s) << '\n';
}

}  // namespace htd2
