#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <random>
#include <utility>
#include <variant>
#include <vector>

#include "obsv/expr.hpp"
#include "obsv/integrate.hpp"
#include "obsv/rng.hpp"

namespace obsv {

/// Triangular system declaration: n-1 superdiagonal coefficients a_2..a_n in
/// the variables (t, y, u) and n drift components f_1..f_n where f_1..f_{n-1}
/// may reference only (t, x1, u) and f_n the full state. The output is x1.
struct TriangularSpec {
    int n = 0;
    int m = 0;
    std::vector<Expr> a;  // size n-1
    std::vector<Expr> f;  // size n
};

/// Evaluatable system  xdot = A(t,y,u) x + f(t,y,x,u),  y = C(t,u) x.
struct SystemModel {
    int n = 0, m = 0, k = 0;
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd& y, const Eigen::VectorXd& u)> A;
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u)> f;
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd& u)> C;
    /// Present when the model came from build_triangular; the H2 check needs it.
    std::shared_ptr<const TriangularSpec> triangular;
};

/// Input signal: per channel either an expression in t or a piecewise-constant
/// table (strictly increasing breakpoints; the last value holds beyond the end).
class InputSignal {
public:
    struct Table {
        std::vector<double> breaks;
        std::vector<double> values;
    };
    using Channel = std::variant<Expr, Table>;

    InputSignal() = default;
    explicit InputSignal(std::vector<Channel> channels) : channels_(std::move(channels)) {
        for (const auto& ch : channels_) {
            if (const Table* tab = std::get_if<Table>(&ch)) {
                if (tab->breaks.empty() || tab->breaks.size() != tab->values.size())
                    throw Error("InputSignal: table breakpoints/values mismatch");
                for (std::size_t i = 1; i < tab->breaks.size(); ++i)
                    if (!(tab->breaks[i] > tab->breaks[i - 1]))
                        throw Error("InputSignal: breakpoints must be strictly increasing");
            }
        }
    }

    static InputSignal constant(const Eigen::VectorXd& v) {
        std::vector<Channel> ch;
        for (int i = 0; i < v.size(); ++i) {
            Table t;
            t.breaks = {0.0};
            t.values = {v[i]};
            ch.emplace_back(std::move(t));
        }
        return InputSignal(std::move(ch));
    }

    int channels() const { return static_cast<int>(channels_.size()); }

    Eigen::VectorXd eval(double t) const {
        Eigen::VectorXd out(channels());
        for (int i = 0; i < channels(); ++i) {
            if (const Expr* e = std::get_if<Expr>(&channels_[i])) {
                EvalEnv env;
                env.t = t;
                out[i] = e->eval(env);
            } else {
                const Table& tab = std::get<Table>(channels_[i]);
                std::size_t j = 0;
                while (j + 1 < tab.breaks.size() && t >= tab.breaks[j + 1]) ++j;
                out[i] = tab.values[j];
            }
        }
        return out;
    }

private:
    std::vector<Channel> channels_;
};

/// Builds the evaluatable model for a triangular spec: A carries a_{i+1} on
/// the superdiagonal, C = [1 0 ... 0], and the measured output is substituted
/// for x1 inside every drift component (output injection).
inline SystemModel build_triangular(TriangularSpec spec) {
    const int n = spec.n, m = spec.m;
    if (n < 1) throw Error("build_triangular: state dimension must be positive");
    if (m < 0) throw Error("build_triangular: negative input dimension");
    if (static_cast<int>(spec.a.size()) != n - 1)
        throw Error("build_triangular: expected " + std::to_string(n - 1) + " superdiagonal coefficients");
    if (static_cast<int>(spec.f.size()) != n)
        throw Error("build_triangular: expected " + std::to_string(n) + " drift components");

    for (int i = 0; i < n - 1; ++i) {
        const Expr& e = spec.a[i];
        if (e.max_x_index() > 0)
            throw Error("build_triangular: a" + std::to_string(i + 2) +
                        " may depend on (t, y, u) only");
        if (e.max_u_index() > m)
            throw Error("build_triangular: a" + std::to_string(i + 2) + " references u" +
                        std::to_string(e.max_u_index()) + " but m=" + std::to_string(m));
    }
    for (int i = 0; i < n; ++i) {
        const Expr& e = spec.f[i];
        if (e.uses_y())
            throw Error("build_triangular: f" + std::to_string(i + 1) +
                        " must be written in x1, not y");
        if (e.max_u_index() > m)
            throw Error("build_triangular: f" + std::to_string(i + 1) + " references u" +
                        std::to_string(e.max_u_index()) + " but m=" + std::to_string(m));
        const int max_x = i < n - 1 ? 1 : n;
        for (int j = max_x + 1; j <= std::max(e.max_x_index(), max_x); ++j)
            if (e.uses_x(j))
                throw Error("build_triangular: f" + std::to_string(i + 1) + " may not reference x" +
                            std::to_string(j));
    }

    auto tri = std::make_shared<const TriangularSpec>(std::move(spec));

    SystemModel model;
    model.n = n;
    model.m = m;
    model.k = 1;
    model.triangular = tri;

    model.A = [tri, n](double t, const Eigen::VectorXd& y, const Eigen::VectorXd& u) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        EvalEnv env;
        env.t = t;
        env.y = y[0];
        env.y_set = true;
        env.u = u.data();
        env.nu = static_cast<int>(u.size());
        for (int i = 0; i < n - 1; ++i) A(i, i + 1) = tri->a[i].eval(env);
        return A;
    };

    model.f = [tri, n](double t, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) {
        // x1 slot bound to the measured output in every component.
        Eigen::VectorXd xs(n);
        xs = x;
        xs[0] = y[0];
        EvalEnv env;
        env.t = t;
        env.y = y[0];
        env.y_set = true;
        env.x = xs.data();
        env.nx = n;
        env.u = u.data();
        env.nu = static_cast<int>(u.size());
        Eigen::VectorXd out(n);
        for (int i = 0; i < n; ++i) out[i] = tri->f[i].eval(env);
        return out;
    };

    model.C = [n](double, const Eigen::VectorXd&) {
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(1, n);
        C(0, 0) = 1.0;
        return C;
    };

    return model;
}

struct H2Report {
    double product = 0.0;
    bool pass = false;
};

/// Observability product check for triangular models: prod_i a_i(t0, y0, u0)
/// must stay away from zero.
inline H2Report check_h2(const SystemModel& model, double t0, double y0,
                         const Eigen::VectorXd& u0, double threshold = 1e-12) {
    if (!model.triangular)
        throw UnsupportedCheck("check_h2: model was not built from a triangular spec");
    EvalEnv env;
    env.t = t0;
    env.y = y0;
    env.y_set = true;
    env.u = u0.data();
    env.nu = static_cast<int>(u0.size());
    double product = 1.0;
    for (const Expr& a : model.triangular->a) product *= a.eval(env);
    return {product, std::abs(product) > threshold};
}

/// Sampling box for the Lipschitz estimate.
struct LipschitzBox {
    double t_lo = 0.0, t_hi = 1.0;
    double y_lo = -1.0, y_hi = 1.0;
    double radius = 1.0;             // x sampled in this Euclidean ball
    Eigen::VectorXd u_lo, u_hi;      // per-channel input range
};

/// Randomized estimate of the Lipschitz constant of f in x over the box,
/// returned with a 1.5 safety factor. Samples alternate between independent
/// point pairs and point-plus-small-shift pairs; the latter probe tangent
/// slopes that far-apart pairs wash out. Draws are radius-scaled from fixed
/// unit samples, so enlarging the ball never decreases the estimate.
inline double estimate_lipschitz(const SystemModel& model, const LipschitzBox& box,
                                 int samples, std::uint64_t seed) {
    if (samples < 100) throw Error("estimate_lipschitz: need at least 100 samples");
    if (box.u_lo.size() != model.m || box.u_hi.size() != model.m)
        throw Error("estimate_lipschitz: input range dimension mismatch");

    std::mt19937_64 rng(splitmix64(seed));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss;
    double worst = 0.0;
    Eigen::VectorXd y(1), u(model.m);
    for (int s = 0; s < samples; ++s) {
        const double t = box.t_lo + unif(rng) * (box.t_hi - box.t_lo);
        y[0] = box.y_lo + unif(rng) * (box.y_hi - box.y_lo);
        for (int j = 0; j < model.m; ++j)
            u[j] = box.u_lo[j] + unif(rng) * (box.u_hi[j] - box.u_lo[j]);
        Eigen::VectorXd z1, z2;
        if (s % 2 == 0) {
            z1 = uniform_in_ball(rng, model.n, box.radius);
            z2 = uniform_in_ball(rng, model.n, box.radius);
        } else {
            z1 = uniform_in_ball(rng, model.n, (1.0 - 1e-3) * box.radius);
            Eigen::VectorXd dir(model.n);
            for (int i = 0; i < model.n; ++i) dir[i] = gauss(rng);
            z2 = z1 + (0.99e-3 * box.radius / dir.norm()) * dir;
        }
        const double dz = (z1 - z2).norm();
        if (dz < 1e-12 * std::max(1.0, box.radius)) continue;
        Eigen::VectorXd f1 = model.f(t, y, z1, u);
        Eigen::VectorXd f2 = model.f(t, y, z2, u);
        if (!f1.allFinite() || !f2.allFinite())
            throw Error("estimate_lipschitz: non-finite drift at a sampled point");
        worst = std::max(worst, (f1 - f2).norm() / dz);
    }
    return 1.5 * worst;
}

/// Ground truth: integrates the closed loop (y fed back as C x along the way)
/// and returns the state path together with the sampled output path.
inline std::pair<Trajectory, Trajectory> simulate_truth(const SystemModel& model,
                                                        const Eigen::VectorXd& x0,
                                                        const InputSignal& u,
                                                        const TimeGrid& grid) {
    if (x0.size() != model.n) throw Error("simulate_truth: x0 dimension mismatch");
    auto rhs = [&model, &u](double t, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
        const Eigen::VectorXd ut = u.eval(t);
        const Eigen::VectorXd yt = model.C(t, ut) * x;
        dx = model.A(t, yt, ut) * x + model.f(t, yt, x, ut);
    };
    Trajectory x = integrate_ode(rhs, x0, grid);
    Eigen::MatrixXd yv(model.k, grid.n_nodes());
    for (int i = 0; i < grid.n_nodes(); ++i) {
        const double t = grid.node(i);
        yv.col(i) = model.C(t, u.eval(t)) * x[i];
    }
    return {std::move(x), Trajectory(grid, std::move(yv))};
}

}  // namespace obsv
