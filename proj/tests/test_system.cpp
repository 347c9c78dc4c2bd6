#include <catch2/catch_amalgamated.hpp>

#include "obsv/system.hpp"

using namespace obsv;
using Catch::Approx;

namespace {

TriangularSpec planar_spec() {
    TriangularSpec s;
    s.n = 2;
    s.m = 1;
    s.a.push_back(Expr::parse("u1"));
    s.f.push_back(Expr::parse("0"));
    s.f.push_back(Expr::parse("x1 - x2^3"));
    return s;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<int>(v.size()));
    int i = 0;
    for (double d : v) x[i++] = d;
    return x;
}

}  // namespace

TEST_CASE("build_triangular: planar example shapes and output injection") {
    const SystemModel m = build_triangular(planar_spec());
    CHECK(m.n == 2);
    CHECK(m.k == 1);

    const Eigen::VectorXd y = vec({5.0});
    const Eigen::VectorXd u = vec({3.0});
    const Eigen::MatrixXd A = m.A(0.0, y, u);
    CHECK(A(0, 1) == Approx(3.0));  // a2 = u1
    CHECK(A(0, 0) == 0.0);
    CHECK(A(1, 0) == 0.0);
    CHECK(A(1, 1) == 0.0);

    // f2 = x1 - x2^3 with the x1 slot bound to the measured output
    const Eigen::VectorXd f = m.f(0.0, y, vec({999.0, 2.0}), u);
    CHECK(f[0] == 0.0);
    CHECK(f[1] == Approx(5.0 - 8.0));

    const Eigen::MatrixXd C = m.C(0.0, u);
    CHECK(C(0, 0) == 1.0);
    CHECK(C(0, 1) == 0.0);
}

TEST_CASE("build_triangular: scalar integrator and 3-chain") {
    TriangularSpec s1;
    s1.n = 1;
    s1.m = 0;
    s1.f.push_back(Expr::parse("0"));
    const SystemModel m1 = build_triangular(s1);
    CHECK(m1.A(0.0, vec({1.0}), Eigen::VectorXd(0)).rows() == 1);
    CHECK(m1.A(0.0, vec({1.0}), Eigen::VectorXd(0))(0, 0) == 0.0);
    CHECK(m1.C(0.0, Eigen::VectorXd(0))(0, 0) == 1.0);

    TriangularSpec s3;
    s3.n = 3;
    s3.m = 0;
    s3.a.push_back(Expr::parse("1"));
    s3.a.push_back(Expr::parse("1"));
    for (int i = 0; i < 3; ++i) s3.f.push_back(Expr::parse("0"));
    const SystemModel m3 = build_triangular(s3);
    const Eigen::MatrixXd A = m3.A(0.5, vec({0.0}), Eigen::VectorXd(0));
    CHECK(A(0, 1) == 1.0);
    CHECK(A(1, 2) == 1.0);
    CHECK(A.cwiseAbs().sum() == Approx(2.0));  // strictly superdiagonal
}

TEST_CASE("build_triangular rejects dependency violations") {
    TriangularSpec s;
    s.n = 3;
    s.m = 0;
    s.a.push_back(Expr::parse("1"));
    s.a.push_back(Expr::parse("1"));
    s.f.push_back(Expr::parse("x2"));  // f1 may only use x1
    s.f.push_back(Expr::parse("0"));
    s.f.push_back(Expr::parse("0"));
    CHECK_THROWS_AS(build_triangular(s), Error);

    TriangularSpec s2 = planar_spec();
    s2.a[0] = Expr::parse("x1");  // coefficients live in (t, y, u)
    CHECK_THROWS_AS(build_triangular(s2), Error);

    TriangularSpec s3 = planar_spec();
    s3.f[1] = Expr::parse("y - x2^3");  // drift is written in x1, not y
    CHECK_THROWS_AS(build_triangular(s3), Error);
}

TEST_CASE("check_h2: planar pass, zero coefficient fail, product value") {
    const SystemModel planar = build_triangular(planar_spec());
    const H2Report r1 = check_h2(planar, 0.0, 2.0, vec({1.0}));
    CHECK(r1.pass);
    CHECK(r1.product == Approx(1.0));

    TriangularSpec st = planar_spec();
    st.a[0] = Expr::parse("t");
    const H2Report r2 = check_h2(build_triangular(st), 0.0, 2.0, vec({1.0}));
    CHECK_FALSE(r2.pass);
    CHECK(r2.product == Approx(0.0).margin(1e-15));

    TriangularSpec s3;
    s3.n = 3;
    s3.m = 0;
    s3.a.push_back(Expr::parse("2"));
    s3.a.push_back(Expr::parse("-3"));
    for (int i = 0; i < 3; ++i) s3.f.push_back(Expr::parse("0"));
    const H2Report r3 = check_h2(build_triangular(s3), 0.0, 0.0, Eigen::VectorXd(0));
    CHECK(r3.pass);
    CHECK(r3.product == Approx(-6.0));
}

TEST_CASE("check_h2 verdict ignores the drift entirely") {
    TriangularSpec a = planar_spec();
    TriangularSpec b = planar_spec();
    b.f[1] = Expr::parse("100*(x1 - x2^3)");
    const H2Report ra = check_h2(build_triangular(a), 0.0, 2.0, vec({1.0}));
    const H2Report rb = check_h2(build_triangular(b), 0.0, 2.0, vec({1.0}));
    CHECK(ra.pass == rb.pass);
    CHECK(ra.product == rb.product);
}

TEST_CASE("check_h2 requires a triangular-built model") {
    SystemModel m;
    m.n = 1;
    m.m = 0;
    m.k = 1;
    CHECK_THROWS_AS(check_h2(m, 0.0, 0.0, Eigen::VectorXd(0)), UnsupportedCheck);
}

namespace {

LipschitzBox ball_box(double radius, int m_channels) {
    LipschitzBox b;
    b.t_lo = 0.0;
    b.t_hi = 1.0;
    b.y_lo = -3.0;
    b.y_hi = 3.0;
    b.radius = radius;
    b.u_lo = Eigen::VectorXd::Constant(m_channels, 1.0);
    b.u_hi = Eigen::VectorXd::Constant(m_channels, 1.0);
    return b;
}

}  // namespace

TEST_CASE("estimate_lipschitz: zero drift gives zero") {
    TriangularSpec s = planar_spec();
    s.f[1] = Expr::parse("0");
    const double C = estimate_lipschitz(build_triangular(s), ball_box(3.0, 1), 1000, 11);
    CHECK(C == 0.0);
}

TEST_CASE("estimate_lipschitz: cubic drift reaches the analytic slope bound") {
    // slope of x2^3 on |x| <= 3 peaks at 27; the 1.5 margin must push the
    // sampled estimate past it
    const double C = estimate_lipschitz(build_triangular(planar_spec()), ball_box(3.0, 1),
                                        200000, 2024);
    CHECK(C >= 27.0);
    CHECK(C <= 1.5 * 27.0 * 1.05);
}

TEST_CASE("estimate_lipschitz: saturation has unit slope") {
    TriangularSpec s;
    s.n = 2;
    s.m = 0;
    s.a.push_back(Expr::parse("1"));
    s.f.push_back(Expr::parse("sat(x1)"));
    s.f.push_back(Expr::parse("0"));
    // the first drift slot reads the measured output, so probe through y:
    // build a 1-state model with f = sat(x1) instead
    TriangularSpec s1;
    s1.n = 1;
    s1.m = 0;
    s1.f.push_back(Expr::parse("sat(x1)"));
    SystemModel m = build_triangular(s1);
    // bypass output injection: probe f as a raw function of the state slot
    SystemModel probe = m;
    probe.f = [](double, const Eigen::VectorXd&, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
        Eigen::VectorXd out(1);
        out[0] = std::clamp(x[0], -1.0, 1.0);
        return out;
    };
    LipschitzBox b = ball_box(3.0, 0);
    const double C = estimate_lipschitz(probe, b, 50000, 5);
    CHECK(C >= 1.0);
    CHECK(C <= 1.6);
}

TEST_CASE("estimate_lipschitz is monotone in the ball radius") {
    const SystemModel m = build_triangular(planar_spec());
    double prev = 0.0;
    for (double r : {1.0, 2.0, 3.0, 6.0}) {
        const double C = estimate_lipschitz(m, ball_box(r, 1), 5000, 77);
        CHECK(C >= prev);
        prev = C;
    }
}

TEST_CASE("simulate_truth: planar example output starts at 2") {
    const SystemModel m = build_triangular(planar_spec());
    const InputSignal u = InputSignal::constant(vec({1.0}));
    auto [x, y] = simulate_truth(m, vec({2.0, 0.0}), u, TimeGrid(0.0, 5e-4, 128));
    CHECK(y[0][0] == Approx(2.0));
    CHECK(x[0][0] == 2.0);
    CHECK(x[0][1] == 0.0);
    // x2 should start moving with slope x1 - x2^3 = 2
    CHECK(x[128][1] == Approx(2.0 * 5e-4).epsilon(1e-3));
}

TEST_CASE("simulate_truth: equilibrium stays put") {
    TriangularSpec s = planar_spec();
    s.f[1] = Expr::parse("0");
    s.a[0] = Expr::parse("0");
    const SystemModel m = build_triangular(s);
    auto [x, y] = simulate_truth(m, vec({3.0, -1.0}), InputSignal::constant(vec({1.0})),
                                 TimeGrid(0.0, 1.0, 64));
    CHECK((x[64] - vec({3.0, -1.0})).norm() == 0.0);
    CHECK(y[32][0] == Approx(3.0));
}

TEST_CASE("simulate_truth: two-integrator chain gives y = t") {
    TriangularSpec s;
    s.n = 2;
    s.m = 1;
    s.a.push_back(Expr::parse("1"));
    s.f.push_back(Expr::parse("0"));
    s.f.push_back(Expr::parse("0"));
    const SystemModel m = build_triangular(s);
    auto [x, y] = simulate_truth(m, vec({0.0, 1.0}), InputSignal::constant(vec({1.0})),
                                 TimeGrid(0.0, 1.0, 256));
    for (int i : {1, 64, 128, 256})
        CHECK(y[i][0] == Approx(TimeGrid(0.0, 1.0, 256).node(i)).margin(1e-10));
}

TEST_CASE("output-injection consistency along the true trajectory") {
    // along y(t) = x1(t) the built rhs equals the raw triangular rhs
    const SystemModel m = build_triangular(planar_spec());
    const InputSignal u = InputSignal::constant(vec({1.0}));
    auto [x, y] = simulate_truth(m, vec({2.0, 0.0}), u, TimeGrid(0.0, 0.5, 64));
    for (int i : {0, 10, 32, 64}) {
        const double t = x.grid().node(i);
        const Eigen::VectorXd xi = x[i];
        const Eigen::VectorXd yi = y[i];
        const Eigen::VectorXd ui = u.eval(t);
        const Eigen::VectorXd built = m.A(t, yi, ui) * xi + m.f(t, yi, xi, ui);
        Eigen::VectorXd raw(2);
        raw[0] = xi[1] * ui[0];                       // a2(t,x1,u) x2 + f1
        raw[1] = xi[0] - xi[1] * xi[1] * xi[1];       // f2(t, x1, x2)
        CHECK((built - raw).norm() <= 1e-12 * (1.0 + raw.norm()));
    }
}

TEST_CASE("input tables: piecewise-constant evaluation and validation") {
    InputSignal::Table tab;
    tab.breaks = {0.0, 1.0, 2.0};
    tab.values = {5.0, -1.0, 2.5};
    const InputSignal u(std::vector<InputSignal::Channel>{tab});
    CHECK(u.eval(0.0)[0] == 5.0);
    CHECK(u.eval(0.99)[0] == 5.0);
    CHECK(u.eval(1.0)[0] == -1.0);
    CHECK(u.eval(10.0)[0] == 2.5);  // holds the last value

    InputSignal::Table bad = tab;
    bad.breaks = {0.0, 1.0, 1.0};
    CHECK_THROWS_AS(InputSignal(std::vector<InputSignal::Channel>{bad}), Error);
}
