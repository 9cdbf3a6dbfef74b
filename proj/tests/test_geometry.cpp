#include <doctest.h>

#include "htd2/errors.hpp"
#include "htd2/geometry.hpp"
#include "htd2/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace htd2;

namespace {

MapSpec grid(int w, int h, double ds = 1.0) {
    MapSpec m;
    m.width = w;
    m.height = h;
    m.cell_size = ds;
    return m;
}

}  // namespace

TEST_CASE("state counts") {
    CHECK(StateSpace(grid(1, 1)).n_states() == 1);
    CHECK(StateSpace(grid(1, 1)).n_q() == 5);
    CHECK(StateSpace(grid(17, 5, 0.1)).n_states() == 85);

    MapSpec holed = grid(3, 3);
    holed.mask.assign(9, true);
    holed.mask[4] = false;
    const StateSpace s(holed);
    CHECK(s.n_states() == 8);
    CHECK(s.state_at(1, 1) == -1);
    CHECK(s.state_at(2, 1) == 4);
}

TEST_CASE("constructor rejects degenerate maps") {
    CHECK_THROWS_AS(StateSpace(grid(0, 3)), ConfigError);
    CHECK_THROWS_AS(StateSpace(grid(2, 2, 0.0)), ConfigError);
    MapSpec none = grid(2, 1);
    none.mask = {false, false};
    CHECK_THROWS_AS(StateSpace{none}, ConfigError);
    MapSpec short_mask = grid(2, 2);
    short_mask.mask = {true};
    CHECK_THROWS_AS(StateSpace{short_mask}, ConfigError);
}

TEST_CASE("cell_of") {
    const StateSpace s(grid(5, 5, 0.1));
    CHECK(s.cell_of(s.centroid(0)) == 0);
    CHECK(s.cell_of(s.centroid(13)) == 13);
    // Half-open cells: a shared edge belongs to the cell on its upper side.
    CHECK(s.cell_of(Position(0.1, 0.05)) == 1);
    CHECK(s.cell_of(Position(0.05, 0.1)) == 5);
    CHECK(s.cell_of(Position(0.0, 0.0)) == 0);
    CHECK_THROWS_AS(s.cell_of(Position(-0.01, 0.2)), DomainError);
    CHECK_THROWS_AS(s.cell_of(Position(0.51, 0.2)), DomainError);
    CHECK_FALSE(s.try_cell_of(Position(0.2, 0.51)).has_value());
    // The outer upper edges close onto the last row and column.
    CHECK(s.cell_of(Position(0.5, 0.5)) == 24);

    MapSpec holed = grid(3, 3);
    holed.mask.assign(9, true);
    holed.mask[4] = false;
    CHECK_THROWS_AS(StateSpace(holed).cell_of(Position(1.5, 1.5)), DomainError);
}

TEST_CASE("transition") {
    const StateSpace s(grid(5, 5));
    for (int st = 0; st < s.n_states(); ++st) CHECK(s.transition(st, Action::stay) == st);
    CHECK(s.transition(0, Action::right) == 1);
    CHECK(s.transition(0, Action::up) == 5);
    CHECK(s.transition(0, Action::left) == 0);
    CHECK(s.transition(0, Action::down) == 0);
    CHECK(s.transition(4, Action::right) == 4);
    CHECK(s.transition(24, Action::up) == 24);

    MapSpec holed = grid(3, 3);
    holed.mask.assign(9, true);
    holed.mask[4] = false;
    const StateSpace h(holed);
    CHECK(h.transition(h.state_at(0, 1), Action::right) == h.state_at(0, 1));
    CHECK(h.neighborhood(h.state_at(0, 1)).size() == 3);
}

TEST_CASE("transition is total and local on random masks") {
    std::mt19937_64 rng(7);
    std::bernoulli_distribution keep(0.7);
    for (int trial = 0; trial < 50; ++trial) {
        MapSpec m = grid(6, 4, 0.5);
        m.mask.resize(24);
        for (std::size_t k = 0; k < 24; ++k) m.mask[k] = keep(rng);
        m.mask[0] = true;
        const StateSpace s(m);
        for (int st = 0; st < s.n_states(); ++st)
            for (Action a : kAllActions) {
                const int next = s.transition(st, a);
                REQUIRE(next >= 0);
                REQUIRE(next < s.n_states());
                CHECK(s.transition(next, Action::stay) == next);
                if (next != st)
                    CHECK(std::abs(s.col_of(st) - s.col_of(next)) + std::abs(s.row_of(st) - s.row_of(next)) == 1);
                // A full cell move from the centroid lands in the successor when it is valid.
                const Position step = a == Action::right  ? Position(0.5, 0)
                                      : a == Action::left ? Position(-0.5, 0)
                                      : a == Action::up   ? Position(0, 0.5)
                                      : a == Action::down ? Position(0, -0.5)
                                                          : Position(0, 0);
                const auto landed = s.try_cell_of(s.centroid(st) + step);
                if (landed) CHECK(*landed == next);
            }
    }
}

TEST_CASE("eta") {
    const Position p(0.3, 0.7);
    CHECK(eta(p, p, 1.0) == 0.0);
    CHECK(eta(Position(0, 0), Position(3, 4), 1.0) == doctest::Approx(5.0));
    CHECK(eta(Position(0, 0), Position(0.25, 0), 0.125) == doctest::Approx(2.0));
    CHECK_THROWS_AS(eta(p, p, 0.0), ConfigError);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int k = 0; k < 200; ++k) {
        const Position a(u(rng), u(rng)), b(u(rng), u(rng)), c(u(rng), u(rng));
        const double v = 0.125;
        CHECK(eta(a, b, v) >= 0.0);
        CHECK(eta(a, b, v) == doctest::Approx(eta(b, a, v)));
        CHECK(eta(a, c, v) <= eta(a, b, v) + eta(b, c, v) + 1e-12);
    }
}

TEST_CASE("servicing taxi path") {
    ServiceLeg leg{Position(0, 0), 2.0, 4.0};
    const Position pickup(1, 0), dropoff(1, 2);
    CHECK((step_servicing_taxi(leg, pickup, dropoff, 4.0, 2.0) - leg.start).norm() < 1e-12);
    CHECK((step_servicing_taxi(leg, pickup, dropoff, 4.0, 3.0) - Position(0.5, 0)).norm() < 1e-12);
    CHECK((step_servicing_taxi(leg, pickup, dropoff, 4.0, 4.0) - pickup).norm() < 1e-12);
    CHECK((step_servicing_taxi(leg, pickup, dropoff, 4.0, 6.0) - Position(1, 1)).norm() < 1e-12);
    CHECK((step_servicing_taxi(leg, pickup, dropoff, 4.0, 8.0) - dropoff).norm() < 1e-12);
    CHECK_THROWS_AS(step_servicing_taxi(leg, pickup, dropoff, 4.0, 9.0), DomainError);
}

TEST_CASE("dispatch kinematics") {
    const Position p(0.2, 0.2), u(0.5, 0.6);
    const double v = 0.125;
    CHECK((step_dispatched_taxi(p, p, 1.0, v) - p).norm() == 0.0);
    CHECK((step_dispatched_taxi(p, u, eta(u, p, v), v) - u).norm() < 1e-12);
    CHECK((step_dispatched_taxi(p, u, eta(u, p, v) / 2, v) - (p + u) / 2).norm() < 1e-12);
    CHECK((step_dispatched_taxi(p, u, 100.0, v) - u).norm() == 0.0);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> x(0, 2), dt(0, 5);
    for (int k = 0; k < 500; ++k) {
        const Position a(x(rng), x(rng)), b(x(rng), x(rng));
        const double h = dt(rng);
        const Position q = step_dispatched_taxi(a, b, h, v);
        CHECK((q - b).norm() <= std::max(0.0, (a - b).norm() - v * h) + 1e-9);
    }
}

TEST_CASE("mask file") {
    const auto path = std::filesystem::temp_directory_path() / "htd2_mask_test.txt";
    {
        std::ofstream f(path);
        f << "1 1 1\n1 0 1\n";
    }
    const auto mask = load_mask_file(path.string(), 3, 2);
    CHECK(std::count(mask.begin(), mask.end(), true) == 5);
    CHECK_FALSE(mask[4]);
    CHECK_THROWS(load_mask_file(path.string(), 4, 2));
    CHECK_THROWS_AS(load_mask_file("/nonexistent/mask.txt", 3, 2), ConfigError);
    std::filesystem::remove(path);
}

TEST_CASE("spatial index matches brute force") {
    const StateSpace s(grid(8, 6, 0.1));
    Rng rng(5);
    std::vector<Position> pts;
    for (int k = 0; k < 300; ++k) pts.push_back(sample_valid_area(s, rng));
    const SpatialIndex index(s, pts);
    for (double r : {0.0, 0.05, 0.15, 0.3, 2.0})
        for (int k = 0; k < 30; ++k) {
            const Position& p = pts[static_cast<std::size_t>(k)];
            std::vector<int> expect;
            for (int j = 0; j < static_cast<int>(pts.size()); ++j)
                if ((pts[j] - p).norm() < r) expect.push_back(j);
            CHECK(index.within(p, r) == expect);
        }
}

TEST_CASE("cell sampling stays in the cell") {
    const StateSpace s(grid(4, 3, 0.1));
    Rng rng(1);
    for (int st = 0; st < s.n_states(); ++st)
        for (int k = 0; k < 50; ++k) CHECK(s.cell_of(sample_in_cell(s, st, rng)) == st);
}

TEST_CASE("streams are independent and reproducible") {
    Rng a = make_stream(42, Stream::demand), b = make_stream(42, Stream::demand);
    Rng c = make_stream(42, Stream::noise), d = make_stream(43, Stream::demand);
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
    CHECK(x != d());
}
