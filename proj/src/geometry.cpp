#include "htd2/geometry.hpp"

#include "htd2/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace htd2 {

std::string_view to_string(Action a) noexcept {
    switch (a) {
        case Action::stay: return "stay";
        case Action::right: return "right";
        case Action::up: return "up";
        case Action::left: return "left";
        case Action::down: return "down";
    }
    return "?";
}

std::vector<bool> load_mask_file(const std::string& path, int width, int height) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mask file: " + path);
    std::vector<bool> mask;
    mask.reserve(static_cast<std::size_t>(width) * height);
    std::string line;
    std::size_t line_no = 0;
    int rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tok;
        int cols = 0;
        while (ls >> tok) {
            if (tok != "0" && tok != "1")
                throw ParseError("mask file " + path + ": line " + std::to_string(line_no) +
                                     ": expected 0 or 1, got '" + tok + "'",
                                 line_no);
            mask.push_back(tok == "1");
            ++cols;
        }
        if (cols == 0) continue;
        if (cols != width)
            throw ParseError("mask file " + path + ": line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(width) + " columns, got " + std::to_string(cols),
                             line_no);
        ++rows;
    }
    if (rows != height)
        throw ParseError("mask file " + path + ": expected " + std::to_string(height) + " rows, got " +
                             std::to_string(rows),
                         line_no);
    return mask;
}

StateSpace::StateSpace(const MapSpec& spec)
    : width_(spec.width), height_(spec.height), ds_(spec.cell_size), origin_(spec.origin) {
    if (width_ < 1 || height_ < 1) throw ConfigError("map width and height must be >= 1");
    if (!(ds_ > 0.0) || !std::isfinite(ds_)) throw ConfigError("map cell_size must be > 0");
    if (!origin_.allFinite()) throw ConfigError("map origin must be finite");
    const auto n_grid = static_cast<std::size_t>(width_) * height_;
    if (!spec.mask.empty() && spec.mask.size() != n_grid)
        throw ConfigError("validity mask size does not match map dimensions");

    grid_to_state_.assign(n_grid, -1);
    for (std::size_t g = 0; g < n_grid; ++g) {
        if (spec.mask.empty() || spec.mask[g]) {
            grid_to_state_[g] = static_cast<int>(state_to_grid_.size());
            state_to_grid_.push_back(static_cast<int>(g));
        }
    }
    if (state_to_grid_.empty()) throw ConfigError("map has no valid cells");

    successor_.resize(static_cast<std::size_t>(n_q()));
    for (int s = 0; s < n_states(); ++s) {
        const int c = col_of(s);
        const int r = row_of(s);
        for (Action a : kAllActions) {
            int nc = c, nr = r;
            switch (a) {
                case Action::stay: break;
                case Action::right: ++nc; break;
                case Action::up: ++nr; break;
                case Action::left: --nc; break;
                case Action::down: --nr; break;
            }
            const int next = state_at(nc, nr);
            successor_[index(s, a)] = next >= 0 ? next : s;
        }
    }
}

bool StateSpace::grid_valid(int col, int row) const noexcept { return state_at(col, row) >= 0; }

int StateSpace::state_at(int col, int row) const noexcept {
    if (col < 0 || row < 0 || col >= width_ || row >= height_) return -1;
    return grid_to_state_[static_cast<std::size_t>(row) * width_ + col];
}

std::optional<int> StateSpace::try_cell_of(const Position& p) const noexcept {
    if (!p.allFinite()) return std::nullopt;
    const Position rel = (p - origin_) / ds_;
    // Half-open cells; the map's outer upper edges close onto the last cell.
    auto to_grid = [](double v, int n) -> int {
        if (v < 0.0 || v > n) return -1;
        const int i = static_cast<int>(std::floor(v));
        return std::min(i, n - 1);
    };
    const int col = to_grid(rel.x(), width_);
    const int row = to_grid(rel.y(), height_);
    if (col < 0 || row < 0) return std::nullopt;
    const int s = state_at(col, row);
    if (s < 0) return std::nullopt;
    return s;
}

int StateSpace::cell_of(const Position& p) const {
    if (auto s = try_cell_of(p)) return *s;
    std::ostringstream os;
    os << "position (" << p.x() << ", " << p.y() << ") is outside every valid cell";
    throw DomainError(os.str());
}

Position StateSpace::lower_corner(int s) const {
    return origin_ + ds_ * Position(col_of(s), row_of(s));
}

Position StateSpace::centroid(int s) const { return lower_corner(s) + Position::Constant(0.5 * ds_); }

std::vector<int> StateSpace::neighborhood(int s) const {
    std::vector<int> cells{s};
    for (Action a : kAllActions) {
        const int n = transition(s, a);
        if (std::find(cells.begin(), cells.end(), n) == cells.end()) cells.push_back(n);
    }
    return cells;
}

int StateSpace::nearest_state(const Position& p) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int s = 0; s < n_states(); ++s) {
        const double d = (centroid(s) - p).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = s;
        }
    }
    return best;
}

StateSpace build_state_space(const MapSpec& spec) { return StateSpace(spec); }

double eta(const Position& p1, const Position& p2, double speed) {
    if (!(speed > 0.0)) throw ConfigError("taxi speed must be > 0");
    return (p1 - p2).norm() / speed;
}

Position step_servicing_taxi(const ServiceLeg& leg, const Position& pickup, const Position& dropoff,
                             double duration, double t) {
    const double t_end = leg.t_pickup + duration;
    if (t < leg.t_start || t > t_end)
        throw DomainError("step_servicing_taxi: time outside the service window");
    if (t < leg.t_pickup) {
        const double frac = (t - leg.t_start) / (leg.t_pickup - leg.t_start);
        return leg.start + frac * (pickup - leg.start);
    }
    if (duration <= 0.0) return dropoff;
    const double frac = (t - leg.t_pickup) / duration;
    return pickup + frac * (dropoff - pickup);
}

Position step_dispatched_taxi(const Position& p, const Position& u, double dt, double speed) {
    const double remaining = eta(u, p, speed);
    if (remaining <= dt) return u;
    return p + (dt / remaining) * (u - p);
}

SpatialIndex::SpatialIndex(const StateSpace& space, std::vector<Position> points)
    : space_(&space), points_(std::move(points)) {
    buckets_.resize(static_cast<std::size_t>(space.width()) * space.height());
    for (int j = 0; j < static_cast<int>(points_.size()); ++j) {
        const int c = bucket_col(points_[j].x());
        const int r = bucket_row(points_[j].y());
        buckets_[static_cast<std::size_t>(r) * space.width() + c].push_back(j);
    }
}

int SpatialIndex::bucket_col(double x) const {
    const int c = static_cast<int>(std::floor((x - space_->origin().x()) / space_->cell_size()));
    return std::clamp(c, 0, space_->width() - 1);
}

int SpatialIndex::bucket_row(double y) const {
    const int r = static_cast<int>(std::floor((y - space_->origin().y()) / space_->cell_size()));
    return std::clamp(r, 0, space_->height() - 1);
}

std::vector<int> SpatialIndex::within(const Position& p, double radius) const {
    std::vector<int> out;
    const double r2 = radius * radius;
    const int c0 = bucket_col(p.x() - radius), c1 = bucket_col(p.x() + radius);
    const int r0 = bucket_row(p.y() - radius), r1 = bucket_row(p.y() + radius);
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
            for (int j : buckets_[static_cast<std::size_t>(r) * space_->width() + c])
                if ((points_[j] - p).squaredNorm() < r2) out.push_back(j);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace htd2
