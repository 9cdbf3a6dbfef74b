#include <doctest.h>

#include "oracles.hpp"

#include "htd2/simplex.hpp"

#include <random>

using namespace htd2;
using oracle::IntLp;
using oracle::Rational;
using oracle::random_feasible_lp;
using oracle::reference;

namespace {

LpProblem<double> to_double(const IntLp& p) {
    LpProblem<double> lp;
    const auto m = static_cast<Eigen::Index>(p.b.size()), n = static_cast<Eigen::Index>(p.c.size());
    lp.A.resize(m, n);
    lp.b.resize(m);
    lp.c.resize(n);
    for (Eigen::Index r = 0; r < m; ++r) {
        for (Eigen::Index j = 0; j < n; ++j) lp.A(r, j) = p.A[r][j];
        lp.b[r] = p.b[r];
    }
    for (Eigen::Index j = 0; j < n; ++j) lp.c[j] = p.c[j];
    return lp;
}

}  // namespace

TEST_CASE("hand problems") {
    LpProblem<double> lp;
    lp.A.resize(1, 2);
    lp.A << 1, 1;
    lp.b.resize(1);
    lp.b << 1;
    lp.c.resize(2);
    lp.c << 1, 1;
    CHECK(solve_lp(lp).objective == doctest::Approx(1.0));

    lp.c << 0, 0;
    const auto zero = solve_lp(lp);
    CHECK(zero.objective == 0.0);
    CHECK(zero.x.sum() == doctest::Approx(1.0));

    lp.c << 3, -1;
    const auto sol = solve_lp(lp);
    CHECK(sol.x[0] == doctest::Approx(1.0));
    CHECK(sol.x[1] == doctest::Approx(0.0));
}

TEST_CASE("infeasible and unbounded problems") {
    LpProblem<double> lp;
    lp.A.resize(2, 2);
    lp.A << 1, 1, 1, 1;
    lp.b.resize(2);
    lp.b << 1, 2;
    lp.c = Eigen::Vector2d(1, 0);
    CHECK_THROWS_AS(solve_lp(lp), LpError);

    lp.A.resize(1, 2);
    lp.A << 1, -1;
    lp.b.resize(1);
    lp.b << 0;
    lp.c = Eigen::Vector2d(1, 1);
    CHECK_THROWS_AS(solve_lp(lp), LpError);

    lp.c.resize(3);
    CHECK_THROWS_AS(solve_lp(lp), LpError);
}

TEST_CASE("redundant rows") {
    LpProblem<double> lp;
    lp.A.resize(3, 3);
    lp.A << 1, 1, 0, 0, 1, 1, 1, 2, 1;
    lp.b = Eigen::Vector3d(2, 3, 5);
    lp.c = Eigen::Vector3d(1, 0, 2);
    const auto sol = solve_lp(lp);
    CHECK(sol.used_phase_one);
    CHECK((lp.A * sol.x - lp.b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(sol.objective == doctest::Approx(8.0));
}

TEST_CASE("degenerate cycling instance terminates") {
    // Beale's example in equality form with slacks x4, x5, x6.
    IntLp p;
    p.A = {{1, -32, -4, 36, 4, 0, 0}, {1, -24, -1, 6, 0, 2, 0}, {0, 0, 1, 0, 0, 0, 1}};
    p.b = {0, 0, 1};
    p.c = {3, -80, 2, -24, 0, 0, 0};
    const auto expect = reference(p);
    REQUIRE(expect);
    const std::vector<int> slack_basis{4, 5, 6};
    SimplexOptions opt;
    opt.bland_after = 1;
    CHECK(solve_lp(to_double(p), opt, slack_basis).objective == doctest::Approx(oracle::to_double(*expect)));
    opt.bland_after = 50;
    CHECK(solve_lp(to_double(p), opt, slack_basis).objective == doctest::Approx(oracle::to_double(*expect)));
}

TEST_CASE("matches the rational vertex reference") {
    std::mt19937_64 rng(99);
    int solved = 0;
    while (solved < 50) {
        const IntLp p = random_feasible_lp(rng);
        const auto expect = reference(p);
        if (!expect) continue;  // rank-deficient draw: no basis is square-solvable
        const auto sol = solve_lp(to_double(p));
        CHECK(std::abs(sol.objective - oracle::to_double(*expect)) <= 1e-7);
        const auto lp = to_double(p);
        CHECK((lp.A * sol.x - lp.b).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(sol.x.minCoeff() >= 0.0);
        ++solved;
    }
}

TEST_CASE("random infeasible problems are reported") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> coef(-3, 3), rhs(-6, 6);
    int infeasible = 0;
    for (int trial = 0; trial < 300 && infeasible < 10; ++trial) {
        IntLp p;
        const int n = 4, m = 3;
        for (int r = 0; r < m; ++r) {
            std::vector<int> row(n + 1);
            for (int j = 0; j < n; ++j) row[j] = coef(rng);
            row[n] = 0;
            p.A.push_back(row);
            p.b.push_back(rhs(rng));
        }
        p.A.push_back(std::vector<int>(n + 1, 1));
        p.b.push_back(6);
        p.c = {1, 2, -1, 0, 0};
        if (reference(p)) continue;
        // Only count draws whose matrix has full row rank (no basis solvable means rank loss).
        bool full_rank = false;
        {
            IntLp q = p;
            for (auto& v : q.b) v = 0;
            full_rank = reference(q).has_value();
        }
        if (!full_rank) continue;
        CHECK_THROWS_AS(solve_lp(to_double(p)), LpError);
        ++infeasible;
    }
    CHECK(infeasible == 10);
}
