#pragma once

#include "htd2/geometry.hpp"
#include "htd2/rng.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <vector>

namespace htd2 {

/// One customer request: request time, trip duration, pickup and dropoff.
struct CustomerRequest {
    double t_request = 0.0;
    double t_duration = 0.0;
    Position pickup = Position::Zero();
    Position dropoff = Position::Zero();
};

/// Translating Gaussian mixture over the map. Means move at a shared speed
/// along unit headings and reflect off the map's bounding box.
struct GmmState {
    std::vector<Position> means;
    std::vector<Eigen::Vector2d> headings;
    std::vector<double> weights;
    double speed = 0.0;
    double sigma = 1.0;
    Position lower = Position::Zero();
    Position upper = Position::Ones();

    int n_components() const noexcept { return static_cast<int>(means.size()); }
};

struct GmmParams {
    int n_components = 2;
    double speed = 0.02625;
    double sigma = 0.014;
};

/// Random initial means (uniform over the valid area), random headings,
/// uniform weights.
GmmState make_gmm(const GmmParams& params, const StateSpace& space, Rng& rng);

GmmState gmm_step(GmmState g, double dt);

/// Pickup draws are retried this many times before falling back to the
/// nearest valid centroid.
inline constexpr int kPickupRejectionCap = 100;

/// n_c requests with t_request uniform in [t0, t0 + dt).
std::vector<CustomerRequest> sample_requests(const GmmState& g, int n_c, double t0, double dt,
                                             const StateSpace& space, double taxi_speed, Rng& rng);

/// Result of reading a request CSV.
struct DatasetLoad {
    std::vector<CustomerRequest> requests;
    std::size_t rows_read = 0;
    std::size_t dropped = 0;
    std::vector<std::string> warnings;
};

/// Reads `t_request,t_duration,pickup_x,pickup_y,dropoff_x,dropoff_y` rows.
/// Rows with t_request outside [t_start, t_end) or with off-map endpoints are
/// dropped with a warning. The result is sorted by request time.
DatasetLoad load_dataset(const std::string& path, double t_start, double t_end, const StateSpace& space);
DatasetLoad load_dataset(std::istream& in, const std::string& name, double t_start, double t_end,
                         const StateSpace& space);

void write_dataset(std::ostream& out, const std::vector<CustomerRequest>& requests);

/// Expected requests per (time bin, state), the RHC demand forecast.
struct DemandHistogram {
    double origin = 0.0;
    double bin_width = 1.0;
    /// rows = bins, cols = states
    Eigen::MatrixXd counts;

    int n_bins() const noexcept { return static_cast<int>(counts.rows()); }
    double bin_start(int b) const noexcept { return origin + b * bin_width; }
    /// Bin holding time t, or -1 outside the covered range.
    int bin_of(double t) const noexcept;
    /// Per-state forecast for the bin holding t (zeros outside the range).
    Eigen::VectorXd at(double t) const;
};

/// Histogram over [origin, origin + n_bins * bin_width), averaged over
/// `periods` training periods.
DemandHistogram train_demand_model(const std::vector<CustomerRequest>& requests, double bin_width,
                                   const StateSpace& space, double origin, int n_bins, int periods = 1);

/// `bin_start,cell_index,count`, one row per (bin, state).
void write_histogram_csv(std::ostream& out, const DemandHistogram& h);

}  // namespace htd2
