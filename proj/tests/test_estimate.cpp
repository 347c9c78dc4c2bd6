#include <catch2/catch_amalgamated.hpp>

#include "obsv/estimate.hpp"
#include "obsv/io.hpp"

using namespace obsv;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<int>(v.size()));
    int i = 0;
    for (double d : v) x[i++] = d;
    return x;
}

SystemModel planar_model() {
    TriangularSpec s;
    s.n = 2;
    s.m = 1;
    s.a.push_back(Expr::parse("u1"));
    s.f.push_back(Expr::parse("0"));
    s.f.push_back(Expr::parse("x1 - x2^3"));
    return build_triangular(s);
}

SystemModel scalar_model() {
    TriangularSpec s;
    s.n = 1;
    s.m = 1;
    s.f.push_back(Expr::parse("0"));
    return build_triangular(s);
}

const InputSignal& unit_input() {
    static const InputSignal u = InputSignal::constant(Eigen::VectorXd::Ones(1));
    return u;
}

struct PlanarData {
    SystemModel model = planar_model();
    Trajectory x, y;
    PlanarData() {
        auto [xs, ys] = simulate_truth(model, vec({2.0, 0.0}), unit_input(),
                                       TimeGrid(0.0, 0.01, 262144));
        x = std::move(xs);
        y = std::move(ys);
    }
    EstimatorParams params() const {
        EstimatorParams p;
        p.R = 3.0;
        p.ell = 0.5;
        p.n_iters = 15;
        p.z_init = vec({0.0, 1.0});
        p.seed = 42;
        p.gamma = 0.25;
        p.t_hi = 0.01;
        p.window_nodes = 256;
        p.tol_abs = 1e-5;
        p.truth = &x;
        return p;
    }
};

const PlanarData& planar_data() {
    static const PlanarData d;
    return d;
}

}  // namespace

TEST_CASE("iterate_step: the true trajectory is preserved under restriction") {
    const auto& d = planar_data();
    const GramianBundle b = make_gramian_bundle(d.model, d.y, unit_input(),
                                                TimeGrid(0.0, 5e-4, 256));
    const Trajectory z = iterate_step(b, d.model, d.x);  // guess = truth on a wider grid
    CHECK(detail::sup_distance_resampled(z, d.x) <= 1e-8);
}

TEST_CASE("iterate_step: zero drift lands on the exact solution in one step") {
    TriangularSpec s;
    s.n = 2;
    s.m = 1;
    s.a.push_back(Expr::parse("1"));
    s.f.push_back(Expr::parse("0"));
    s.f.push_back(Expr::parse("0"));
    const SystemModel lin = build_triangular(s);
    auto [x, y] = simulate_truth(lin, vec({0.0, 1.0}), unit_input(), TimeGrid(0.0, 0.02, 8192));
    const GramianBundle b = make_gramian_bundle(lin, y, unit_input(), TimeGrid(0.0, 0.01, 128));
    const Trajectory junk = Trajectory::constant(b.grid, vec({5.0, -5.0}));
    const Trajectory z = iterate_step(b, lin, junk);
    CHECK(detail::sup_distance_resampled(z, x) <= 1e-8);
}

TEST_CASE("Case I on the planar example converges to (2, 0)") {
    const auto& d = planar_data();
    const EstimationRun run = estimate_known_bound(d.model, d.y, unit_input(), d.params());

    REQUIRE_FALSE(run.failed);
    REQUIRE(run.iterations.size() >= 4);
    CHECK(run.converged);

    // radii double exactly
    for (std::size_t i = 1; i < run.iterations.size(); ++i)
        CHECK(run.iterations[i].radius == 2.0 * run.iterations[i - 1].radius);

    // window ends never increase, and the first stays within the coarse bound
    CHECK(run.iterations.front().t <= 1e-2 + 1e-15);
    for (std::size_t i = 1; i < run.iterations.size(); ++i)
        CHECK(run.iterations[i].t <= run.iterations[i - 1].t + 1e-15);

    const double final_err = (run.final_estimate - vec({2.0, 0.0})).norm();
    INFO("final error " << final_err << " after " << run.iterations.size() << " iterations");
    CHECK(final_err < 1e-3);
}

TEST_CASE("Case I error chain: the certified geometric bound holds against truth") {
    const auto& d = planar_data();
    EstimatorParams p = d.params();
    p.n_iters = 8;
    p.stop_on_converged = false;
    const EstimationRun run = estimate_known_bound(d.model, d.y, unit_input(), p);
    REQUIRE_FALSE(run.failed);
    REQUIRE(run.iterations.size() == 8);

    // || z_1 - x || on the first window
    const Trajectory& z1 = run.iterates.front();
    const double base = detail::sup_distance_resampled(z1, d.x);
    for (std::size_t i = 1; i < run.iterations.size(); ++i) {
        const double bound = std::pow(0.5, static_cast<double>(i)) * base +
                             2.0 * run.iterations[i].t + 1e-4;  // window drift + quadrature slack
        CHECK(run.iterations[i].err_truth <= bound);
    }
}

TEST_CASE("Case I nesting and boundedness invariants in truth mode") {
    const auto& d = planar_data();
    EstimatorParams p = d.params();
    p.n_iters = 7;
    p.stop_on_converged = false;
    const EstimationRun run = estimate_known_bound(d.model, d.y, unit_input(), p);
    REQUIRE_FALSE(run.failed);

    for (std::size_t i = 0; i < run.iterations.size(); ++i) {
        // || z_nu || <= R_nu on the accepted windows
        CHECK(run.iterations[i].z_sup <= run.iterations[i].radius);
        if (i >= 1) {
            const double h = run.iterates[i].grid().step();
            const double slack = 10.0 * h * h;
            CHECK(run.iterations[i].z_err_sup <=
                  0.5 * run.iterations[i - 1].z_err_sup + slack + 1e-9);
        }
    }
}

TEST_CASE("Case I dead-beat: scalar zero drift recovers in one application") {
    const SystemModel m = scalar_model();
    auto [x, y] = simulate_truth(m, vec({7.0}), unit_input(), TimeGrid(0.0, 0.02, 16384));
    EstimatorParams p;
    p.R = 10.0;
    p.n_iters = 4;
    p.seed = 9;
    p.t_hi = 0.01;
    p.tol_abs = 1e-8;
    p.truth = &x;
    const EstimationRun run = estimate_known_bound(m, y, unit_input(), p);
    REQUIRE_FALSE(run.failed);
    REQUIRE(run.iterations.size() >= 2);
    // z_1 = 0 so xi_1 = 0; the first window application is already exact
    CHECK(run.iterations[0].xi[0] == Approx(0.0).margin(1e-12));
    CHECK(run.iterations[1].xi[0] == Approx(7.0).margin(1e-8));
    CHECK(run.dead_beat);
    CHECK(run.converged);
}

TEST_CASE("Case I rejects an initial guess outside the stated ball") {
    const auto& d = planar_data();
    EstimatorParams p = d.params();
    p.z_init = vec({9.0, 0.0});
    CHECK_THROWS_AS(estimate_known_bound(d.model, d.y, unit_input(), p), Error);
}

TEST_CASE("Case II diagonal estimates obey the published bound") {
    const auto& d = planar_data();
    EstimatorParams p = d.params();
    p.z_init = Eigen::VectorXd();
    p.n_iters = 10;
    const EstimationRun run = estimate_general(d.model, d.y, unit_input(), p);
    REQUIRE_FALSE(run.failed);
    REQUIRE(run.iterations.size() == 10);
    REQUIRE(run.branches.size() == 10);

    const int k = 3;  // smallest integer exceeding the true sup-norm (about 2)
    for (int nu = k + 1; nu <= 10; ++nu) {
        const IterationRecord& r = run.iterations[nu - 1];
        REQUIRE(r.xi.size() == 2);
        const double err = (r.xi - vec({2.0, 0.0})).norm();
        const double bound = std::pow(0.5, nu - 1) * (nu + k);
        INFO("nu=" << nu << " err=" << err << " bound=" << bound);
        CHECK(err <= bound);
    }
}

TEST_CASE("Case II branches contract individually once started") {
    const auto& d = planar_data();
    EstimatorParams p = d.params();
    p.z_init = Eigen::VectorXd();
    p.n_iters = 6;
    const EstimationRun run = estimate_general(d.model, d.y, unit_input(), p);
    const EstimationRun& branch = run.branches.back();
    REQUIRE(branch.iterations.size() == 6);
    // deltas shrink geometrically once the iteration engages
    for (std::size_t i = 3; i < branch.iterations.size(); ++i) {
        CHECK(branch.iterations[i].delta_xi <=
              0.6 * branch.iterations[i - 1].delta_xi + 1e-9);
    }
}

TEST_CASE("forward propagation from the exact initial state tracks the truth") {
    const auto& d = planar_data();
    const TimeGrid g(0.0, 0.01, 262144);
    const Trajectory prop = forward_propagate(d.model, vec({2.0, 0.0}), d.y, unit_input(), g);
    CHECK(sup_distance(prop, d.x) <= 1e-9);
}

TEST_CASE("forward propagation error shrinks with the estimate sequence") {
    const auto& d = planar_data();
    EstimatorParams p = d.params();
    p.n_iters = 6;
    p.stop_on_converged = false;
    const EstimationRun run = estimate_known_bound(d.model, d.y, unit_input(), p);
    REQUIRE(run.iterations.size() == 6);
    const TimeGrid g(0.0, 0.01, 16384);
    const Trajectory truth = d.x.resample(g);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 2; i < run.iterations.size(); ++i) {
        const Trajectory prop =
            forward_propagate(d.model, run.iterations[i].xi, d.y, unit_input(), g);
        const double dev = sup_distance(prop, truth);
        CHECK(dev <= prev + 1e-12);
        prev = dev;
    }
}

TEST_CASE("runs are bit-reproducible for a fixed seed") {
    const auto& d = planar_data();
    EstimatorParams p = d.params();
    p.n_iters = 5;
    const EstimationRun a = estimate_known_bound(d.model, d.y, unit_input(), p);
    const EstimationRun b = estimate_known_bound(d.model, d.y, unit_input(), p);
    REQUIRE(a.iterations.size() == b.iterations.size());
    for (std::size_t i = 0; i < a.iterations.size(); ++i) {
        CHECK(a.iterations[i].t == b.iterations[i].t);
        CHECK((a.iterations[i].xi - b.iterations[i].xi).norm() == 0.0);
        CHECK(a.iterations[i].ell_measured == b.iterations[i].ell_measured);
    }
}
