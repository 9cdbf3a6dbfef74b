#include <doctest.h>

#include "htd2/demand.hpp"
#include "htd2/errors.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <random>
#include <sstream>

using namespace htd2;

namespace {

StateSpace grid(int w, int h, double ds) {
    MapSpec m;
    m.width = w;
    m.height = h;
    m.cell_size = ds;
    return StateSpace(m);
}

double normal_mass(double mu, double sigma, double lo, double hi) {
    const double k = 1.0 / (sigma * std::sqrt(2.0));
    return 0.5 * (std::erfc((lo - mu) * k) - std::erfc((hi - mu) * k));
}

}  // namespace

TEST_CASE("gmm motion") {
    const StateSpace space = grid(10, 10, 0.1);
    GmmState g;
    g.means = {Position(0.5, 0.5)};
    g.headings = {Eigen::Vector2d(1, 0)};
    g.weights = {1.0};
    g.sigma = 0.05;
    g.lower = space.origin();
    g.upper = space.upper_corner();

    g.speed = 0.0;
    CHECK((gmm_step(g, 1.0).means[0] - g.means[0]).norm() == 0.0);

    g.speed = 0.1;
    CHECK((gmm_step(g, 1.0).means[0] - Position(0.6, 0.5)).norm() < 1e-12);

    g.means[0] = Position(1.0, 0.5);
    const GmmState r = gmm_step(g, 1.0);
    CHECK(r.headings[0].x() == -1.0);
    CHECK((r.means[0] - Position(0.9, 0.5)).norm() < 1e-12);
}

TEST_CASE("gmm preserves heading norms and stays in the box") {
    const StateSpace space = grid(17, 5, 0.1);
    Rng rng(9);
    GmmState g = make_gmm(GmmParams{3, 0.3, 0.014}, space, rng);
    for (int k = 0; k < 500; ++k) {
        g = gmm_step(g, 1.0);
        REQUIRE(g.n_components() == 3);
        for (int c = 0; c < 3; ++c) {
            CHECK(g.headings[c].norm() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK((g.means[c].array() >= g.lower.array()).all());
            CHECK((g.means[c].array() <= g.upper.array()).all());
        }
    }
}

TEST_CASE("request sampling basics") {
    const StateSpace space = grid(17, 5, 0.1);
    Rng rng(4);
    const GmmState g = make_gmm(GmmParams{}, space, rng);
    CHECK(sample_requests(g, 0, 0.0, 1.0, space, 0.125, rng).empty());
    const auto reqs = sample_requests(g, 5, 3.0, 1.0, space, 0.125, rng);
    REQUIRE(reqs.size() == 5);
    for (const auto& r : reqs) {
        CHECK(r.t_request >= 3.0);
        CHECK(r.t_request < 4.0);
        CHECK(space.try_cell_of(r.pickup).has_value());
        CHECK(space.try_cell_of(r.dropoff).has_value());
        CHECK(r.t_duration == doctest::Approx(eta(r.pickup, r.dropoff, 0.125)));
    }

    Rng a(77), b(77);
    const auto x = sample_requests(g, 20, 0.0, 1.0, space, 0.125, a);
    const auto y = sample_requests(g, 20, 0.0, 1.0, space, 0.125, b);
    for (std::size_t k = 0; k < x.size(); ++k) {
        CHECK(x[k].t_request == y[k].t_request);
        CHECK(x[k].pickup == y[k].pickup);
        CHECK(x[k].dropoff == y[k].dropoff);
    }
}

TEST_CASE("narrow component keeps pickups in its cell") {
    const StateSpace space = grid(5, 5, 0.1);
    GmmState g;
    g.means = {space.centroid(12)};
    g.headings = {Eigen::Vector2d(0, 1)};
    g.weights = {1.0};
    g.sigma = 1e-6;
    Rng rng(2);
    for (const auto& r : sample_requests(g, 200, 0.0, 1.0, space, 0.125, rng)) CHECK(space.cell_of(r.pickup) == 12);
}

TEST_CASE("pickup histogram matches the mixture mass per cell") {
    const StateSpace space = grid(8, 6, 0.1);
    GmmState g;
    g.means = {Position(0.25, 0.2), Position(0.6, 0.45)};
    g.headings = {Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)};
    g.weights = {0.4, 0.6};
    g.sigma = 0.09;
    g.lower = space.origin();
    g.upper = space.upper_corner();

    // Each draw keeps its component and is resampled until it lands on the
    // map, so each component is truncated to the map separately.
    const int n = space.n_states();
    Eigen::VectorXd expect = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < 2; ++k) {
        const double inside = normal_mass(g.means[k].x(), g.sigma, 0.0, 0.8) *
                              normal_mass(g.means[k].y(), g.sigma, 0.0, 0.6);
        for (int s = 0; s < n; ++s) {
            const Position lo = space.lower_corner(s);
            expect[s] += g.weights[k] * normal_mass(g.means[k].x(), g.sigma, lo.x(), lo.x() + 0.1) *
                         normal_mass(g.means[k].y(), g.sigma, lo.y(), lo.y() + 0.1) / inside;
        }
    }
    CHECK(expect.sum() == doctest::Approx(1.0).epsilon(1e-12));

    const int draws = 10000;
    Rng rng(20);
    Eigen::VectorXd seen = Eigen::VectorXd::Zero(n);
    for (const auto& r : sample_requests(g, draws, 0.0, 1.0, space, 0.125, rng)) seen[space.cell_of(r.pickup)] += 1;

    // Pool cells with expected count below 5.
    double chi2 = 0.0, pooled_e = 0.0, pooled_o = 0.0;
    int bins = 0;
    for (int s = 0; s < n; ++s) {
        const double e = expect[s] * draws;
        if (e < 5.0) {
            pooled_e += e;
            pooled_o += seen[s];
            continue;
        }
        chi2 += (seen[s] - e) * (seen[s] - e) / e;
        ++bins;
    }
    if (pooled_e > 0.0) {
        chi2 += (pooled_o - pooled_e) * (pooled_o - pooled_e) / pooled_e;
        ++bins;
    }
    const boost::math::chi_squared dist(bins - 1);
    CHECK(chi2 < boost::math::quantile(dist, 0.99));
}

TEST_CASE("dataset loading") {
    const StateSpace space = grid(10, 10, 0.1);
    const std::string header = "t_request,t_duration,pickup_x,pickup_y,dropoff_x,dropoff_y\n";

    std::istringstream empty(header);
    CHECK(load_dataset(empty, "empty", 0.0, 10.0, space).requests.empty());

    std::istringstream one(header + "1.25,3.5,0.125,0.5,0.75,0.0625\n");
    const auto load = load_dataset(one, "one", 0.0, 10.0, space);
    REQUIRE(load.requests.size() == 1);
    const auto& r = load.requests[0];
    CHECK(r.t_request == 1.25);
    CHECK(r.t_duration == 3.5);
    CHECK(r.pickup == Position(0.125, 0.5));
    CHECK(r.dropoff == Position(0.75, 0.0625));

    std::ostringstream fixture;
    fixture << header;
    for (int k = 0; k < 100; ++k) fixture << (k < 90 ? k * 0.1 : 20.0 + k) << ",1,0.5,0.5,0.2,0.2\n";
    std::istringstream in(fixture.str());
    const auto windowed = load_dataset(in, "fixture", 0.0, 10.0, space);
    CHECK(windowed.requests.size() == 90);
    CHECK(windowed.dropped == 10);
    CHECK(windowed.warnings.size() == 10);

    std::istringstream bad_header("a,b,c\n1,2,3\n");
    CHECK_THROWS_AS(load_dataset(bad_header, "bad", 0.0, 10.0, space), ParseError);
    std::istringstream bad_row(header + "1,2,3\n");
    try {
        load_dataset(bad_row, "bad", 0.0, 10.0, space);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv", 0.0, 1.0, space), ConfigError);
}

TEST_CASE("dataset round trip") {
    const StateSpace space = grid(17, 5, 0.1);
    Rng rng(8);
    const GmmState g = make_gmm(GmmParams{}, space, rng);
    const auto reqs = sample_requests(g, 50, 0.0, 5.0, space, 0.125, rng);
    std::stringstream io;
    write_dataset(io, reqs);
    const auto back = load_dataset(io, "rt", 0.0, 5.0, space).requests;
    REQUIRE(back.size() == reqs.size());
    for (std::size_t k = 0; k < reqs.size(); ++k) {
        CHECK(back[k].t_request == reqs[k].t_request);
        CHECK(back[k].pickup == reqs[k].pickup);
        CHECK(back[k].dropoff == reqs[k].dropoff);
        CHECK(back[k].t_duration == reqs[k].t_duration);
    }
}

TEST_CASE("demand histogram") {
    const StateSpace space = grid(5, 5, 0.1);
    CHECK(train_demand_model({}, 1.0, space, 0.0, 4).counts.isZero());

    const CustomerRequest one{2.5, 1.0, space.centroid(7), space.centroid(0)};
    const auto h = train_demand_model({one}, 1.0, space, 0.0, 4);
    CHECK(h.counts.sum() == 1.0);
    CHECK(h.counts(2, 7) == 1.0);
    CHECK(h.bin_of(2.5) == 2);
    CHECK(h.bin_of(-0.1) == -1);
    CHECK(h.bin_of(4.0) == -1);
    CHECK(h.at(9.0).isZero());
    CHECK_THROWS_AS(train_demand_model({}, 0.0, space, 0.0, 1), ConfigError);
}

TEST_CASE("histogram recovers known rates within Poisson bands") {
    const StateSpace space = grid(5, 4, 0.1);
    std::mt19937_64 rng(31);
    const int periods = 200, bins = 3;
    Eigen::MatrixXd rate(bins, space.n_states());
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int b = 0; b < bins; ++b)
        for (int s = 0; s < space.n_states(); ++s) rate(b, s) = u(rng);

    // Period p covers [p * bins, (p + 1) * bins); fold them onto one day.
    std::vector<CustomerRequest> reqs;
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    for (int p = 0; p < periods; ++p)
        for (int b = 0; b < bins; ++b)
            for (int s = 0; s < space.n_states(); ++s) {
                std::poisson_distribution<int> count(rate(b, s));
                for (int k = count(rng); k > 0; --k)
                    reqs.push_back({b + frac(rng), 1.0, space.centroid(s), space.centroid(0)});
            }
    const auto h = train_demand_model(reqs, 1.0, space, 0.0, bins, periods);
    CHECK(h.counts.sum() * periods == doctest::Approx(static_cast<double>(reqs.size())));
    for (int b = 0; b < bins; ++b)
        for (int s = 0; s < space.n_states(); ++s)
            CHECK(std::abs(h.counts(b, s) - rate(b, s)) <= 3.0 * std::sqrt(rate(b, s) / periods));
}
