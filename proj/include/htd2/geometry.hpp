#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace htd2 {

using Position = Eigen::Vector2d;

/// Cell-level dispatch action. The underlying index is a serialization
/// contract: Q-table entry for (s, a) lives at s * 5 + index(a).
enum class Action : std::uint8_t { stay = 0, right = 1, up = 2, left = 3, down = 4 };

inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions{
    Action::stay, Action::right, Action::up, Action::left, Action::down};

constexpr int index(Action a) noexcept { return static_cast<int>(a); }
constexpr Action action_from_index(int i) noexcept { return static_cast<Action>(i); }
std::string_view to_string(Action a) noexcept;

/// Map description as read from a scenario file.
struct MapSpec {
    int width = 1;
    int height = 1;
    double cell_size = 1.0;
    Position origin = Position::Zero();
    /// Row-major over grid cells, row 0 at the origin; empty means all valid.
    std::vector<bool> mask;
};

/// Parse a whitespace-separated 0/1 grid, one row per line; line k is grid row k.
std::vector<bool> load_mask_file(const std::string& path, int width, int height);

/// Rectangular cell grid with a validity mask. Immutable after construction.
///
/// Grid cell (col, row) covers [x0 + col*ds, x0 + (col+1)*ds) x [y0 + row*ds, ...).
/// Valid cells are numbered densely in row-major order; those dense numbers
/// are the MDP states.
class StateSpace {
public:
    explicit StateSpace(const MapSpec& spec);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    double cell_size() const noexcept { return ds_; }
    const Position& origin() const noexcept { return origin_; }
    Position upper_corner() const noexcept {
        return origin_ + Position(width_ * ds_, height_ * ds_);
    }

    int n_states() const noexcept { return static_cast<int>(state_to_grid_.size()); }
    static constexpr int n_actions() noexcept { return kNumActions; }
    int n_q() const noexcept { return n_states() * kNumActions; }

    static constexpr int index(int s, Action a) noexcept { return s * kNumActions + htd2::index(a); }
    static constexpr int state_of(int q) noexcept { return q / kNumActions; }
    static constexpr Action action_of(int q) noexcept { return action_from_index(q % kNumActions); }

    bool grid_valid(int col, int row) const noexcept;
    /// Dense state of grid cell (col, row), or -1 when invalid / off-grid.
    int state_at(int col, int row) const noexcept;
    int col_of(int s) const { return state_to_grid_[s] % width_; }
    int row_of(int s) const { return state_to_grid_[s] / width_; }

    std::optional<int> try_cell_of(const Position& p) const noexcept;
    /// Throws DomainError when p is off-map or inside an invalid cell.
    int cell_of(const Position& p) const;

    Position centroid(int s) const;
    Position lower_corner(int s) const;

    /// Deterministic cell dynamics: neighbor in direction a if it exists and is
    /// valid, otherwise s.
    int transition(int s, Action a) const { return successor_[index(s, a)]; }
    /// successor()[index(s, a)] == transition(s, a).
    const std::vector<int>& successor() const noexcept { return successor_; }

    /// {s} together with its distinct valid 4-neighbors.
    std::vector<int> neighborhood(int s) const;

    /// Nearest valid-cell centroid to p (ties broken by lower state index).
    int nearest_state(const Position& p) const;

private:
    int width_;
    int height_;
    double ds_;
    Position origin_;
    std::vector<int> grid_to_state_;
    std::vector<int> state_to_grid_;
    std::vector<int> successor_;
};

StateSpace build_state_space(const MapSpec& spec);

/// Estimated time of arrival: straight-line distance over the mean fleet speed.
double eta(const Position& p1, const Position& p2, double speed);

/// Trip bookkeeping for a servicing taxi. The taxi leaves `start` at
/// `t_start`, reaches the pickup at `t_pickup` and the dropoff at
/// `t_pickup + trip duration`.
struct ServiceLeg {
    Position start;
    double t_start = 0.0;
    double t_pickup = 0.0;
};

/// Position of a servicing taxi at time t in [t_start, t_pickup + duration):
/// linear to the pickup, then linear to the dropoff.
Position step_servicing_taxi(const ServiceLeg& leg, const Position& pickup, const Position& dropoff,
                             double duration, double t);

/// One dispatch step of length dt toward u at the given speed, clamped at u.
Position step_dispatched_taxi(const Position& p, const Position& u, double dt, double speed);

/// Bucket grid over cells for radius queries on point sets.
class SpatialIndex {
public:
    SpatialIndex(const StateSpace& space, std::vector<Position> points);

    /// Indices j with |points[j] - p| < radius, in ascending order.
    std::vector<int> within(const Position& p, double radius) const;
    const std::vector<Position>& points() const noexcept { return points_; }

private:
    int bucket_col(double x) const;
    int bucket_row(double y) const;

    const StateSpace* space_;
    std::vector<Position> points_;
    std::vector<std::vector<int>> buckets_;
};

}  // namespace htd2
