#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "obsv/grid.hpp"

using namespace obsv;
using Catch::Approx;

TEST_CASE("TimeGrid nodes come from multiplication, not accumulation") {
    const TimeGrid g(0.0, 1.0, 1000);
    CHECK(g.node(0) == 0.0);
    CHECK(g.node(1000) == Approx(1.0).margin(0.0));
    // node(i) must equal t_start + i*h bit-for-bit
    for (int i : {1, 7, 500, 999})
        CHECK(g.node(i) == 0.0 + i * g.step());
}

TEST_CASE("TimeGrid rejects degenerate spans") {
    CHECK_THROWS_AS(TimeGrid(1.0, 1.0, 10), Error);
    CHECK_THROWS_AS(TimeGrid(0.0, 1.0, 1), Error);
    CHECK_THROWS_AS(TimeGrid(0.0, -1.0, 10), Error);
}

TEST_CASE("Trajectory evaluation is exact at nodes and linear between them") {
    const TimeGrid g(0.0, 2.0, 4);
    Eigen::MatrixXd vals(1, 5);
    vals << 0.0, 1.0, 4.0, 9.0, 16.0;  // samples of t^2 at nodes
    const Trajectory tr(g, vals);
    for (int i = 0; i < 5; ++i)
        CHECK(tr.eval(g.node(i))[0] == vals(0, i));
    CHECK(tr.eval(0.25)[0] == Approx(0.5));   // halfway between 0 and 1
    CHECK(tr.eval(1.75)[0] == Approx(12.5));  // halfway between 9 and 16
}

TEST_CASE("Trajectory sup-norm is the max node norm over the window") {
    const TimeGrid g(0.0, 1.0, 10);
    Eigen::MatrixXd vals(2, 11);
    for (int i = 0; i <= 10; ++i) vals.col(i) << g.node(i), -2.0 * g.node(i);
    const Trajectory tr(g, vals);
    CHECK(tr.sup_norm() == Approx(std::sqrt(5.0)));
    CHECK(tr.sup_norm(0.0, 0.5) == Approx(0.5 * std::sqrt(5.0)));
}

TEST_CASE("quadrature: constant integrand gives i*h at every node") {
    const TimeGrid g(0.0, 1.0, 10);
    const Trajectory one = Trajectory::constant(g, Eigen::VectorXd::Ones(1));
    const Trajectory cum = cumulative_trapezoid(one);
    CHECK(cum[0][0] == 0.0);
    for (int i = 0; i <= 10; ++i)
        CHECK(cum[i][0] == Approx(i * 0.1).margin(1e-15));
}

TEST_CASE("quadrature: linear and sine oracles") {
    {
        const TimeGrid g(0.0, 1.0, 1000);
        Eigen::MatrixXd vals(1, g.n_nodes());
        for (int i = 0; i < g.n_nodes(); ++i) vals(0, i) = g.node(i);
        const Trajectory cum = cumulative_trapezoid(Trajectory(g, vals));
        CHECK(cum[g.n_steps()][0] == Approx(0.5).margin(1e-6));  // int_0^1 t dt
    }
    {
        const TimeGrid g(0.0, M_PI, 2000);
        Eigen::MatrixXd vals(1, g.n_nodes());
        for (int i = 0; i < g.n_nodes(); ++i) vals(0, i) = std::sin(g.node(i));
        const Trajectory cum = cumulative_trapezoid(Trajectory(g, vals));
        CHECK(cum[g.n_steps()][0] == Approx(2.0).margin(1e-5));  // int_0^pi sin
    }
}

TEST_CASE("quadrature additivity is exact: segment = difference of prefixes") {
    const TimeGrid g(0.0, 3.0, 64);
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd vals(3, g.n_nodes());
    for (int i = 0; i < g.n_nodes(); ++i)
        for (int r = 0; r < 3; ++r) vals(r, i) = u(rng);
    const Trajectory cum = cumulative_trapezoid(Trajectory(g, vals));
    // the interval integral over [a, b] is defined as cum[b] - cum[a]; check
    // it agrees bitwise with accumulating the same prefix differences
    for (int trial = 0; trial < 50; ++trial) {
        int a = static_cast<int>(rng() % 64);
        int b = a + 1 + static_cast<int>(rng() % (64 - a));
        const Eigen::VectorXd seg = cum[b] - cum[a];
        const Eigen::VectorXd via_mid = (cum[b] - cum[(a + b) / 2]) + (cum[(a + b) / 2] - cum[a]);
        CHECK((seg - via_mid).norm() <= 1e-15 * (1.0 + seg.norm()));
    }
}

TEST_CASE("resampling onto a subgrid reproduces node values") {
    const TimeGrid g(0.0, 1.0, 100);
    Eigen::MatrixXd vals(1, g.n_nodes());
    for (int i = 0; i < g.n_nodes(); ++i) vals(0, i) = std::cos(g.node(i));
    const Trajectory tr(g, vals);
    const TimeGrid sub(0.0, 0.5, 50);  // nodes coincide with the parent's
    const Trajectory r = tr.resample(sub);
    for (int i = 0; i <= 50; ++i)
        CHECK(r[i][0] == Approx(std::cos(sub.node(i))).margin(1e-12));
}
