#pragma once

#include <Eigen/Dense>
#include <functional>

#include "obsv/grid.hpp"

namespace obsv {

using OdeRhs = std::function<void(double t, const Eigen::VectorXd& x, Eigen::VectorXd& dx)>;
using MatrixOdeRhs = std::function<void(double t, const Eigen::MatrixXd& m, Eigen::MatrixXd& dm)>;

/// Classical fixed-step RK4 over the grid. The value at node 0 equals x_init
/// exactly. Throws IntegrationDiverged with the first non-finite node.
inline Trajectory integrate_ode(const OdeRhs& rhs, const Eigen::VectorXd& x_init, const TimeGrid& g) {
    const int d = static_cast<int>(x_init.size());
    const double h = g.step();
    Eigen::MatrixXd out(d, g.n_nodes());
    out.col(0) = x_init;
    Eigen::VectorXd x = x_init, k1(d), k2(d), k3(d), k4(d), tmp(d);
    for (int i = 0; i < g.n_steps(); ++i) {
        const double t = g.node(i);
        rhs(t, x, k1);
        tmp = x + 0.5 * h * k1;
        rhs(t + 0.5 * h, tmp, k2);
        tmp = x + 0.5 * h * k2;
        rhs(t + 0.5 * h, tmp, k3);
        tmp = x + h * k3;
        rhs(t + h, tmp, k4);
        x += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
        if (!x.allFinite())
            throw IntegrationDiverged(i + 1, "integrate_ode: non-finite state at node " + std::to_string(i + 1));
        out.col(i + 1) = x;
    }
    return Trajectory(g, std::move(out));
}

/// RK4 for a matrix ODE, used for fundamental-matrix propagation.
inline MatrixPath integrate_matrix_ode(const MatrixOdeRhs& rhs, const Eigen::MatrixXd& m_init, const TimeGrid& g) {
    const double h = g.step();
    std::vector<Eigen::MatrixXd> out(g.n_nodes());
    out[0] = m_init;
    Eigen::MatrixXd m = m_init, k1, k2, k3, k4, tmp;
    k1.resizeLike(m); k2.resizeLike(m); k3.resizeLike(m); k4.resizeLike(m); tmp.resizeLike(m);
    for (int i = 0; i < g.n_steps(); ++i) {
        const double t = g.node(i);
        rhs(t, m, k1);
        tmp = m + 0.5 * h * k1;
        rhs(t + 0.5 * h, tmp, k2);
        tmp = m + 0.5 * h * k2;
        rhs(t + 0.5 * h, tmp, k3);
        tmp = m + h * k3;
        rhs(t + h, tmp, k4);
        m += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
        if (!m.allFinite())
            throw IntegrationDiverged(i + 1, "integrate_matrix_ode: non-finite state at node " + std::to_string(i + 1));
        out[i + 1] = m;
    }
    return MatrixPath(g, std::move(out));
}

}  // namespace obsv
