#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "obsv/errors.hpp"

namespace obsv {

/// Uniform grid on [t_start, t_end]. Node i sits at t_start + i*step(),
/// computed by multiplication, so node positions carry no summation drift.
class TimeGrid {
public:
    TimeGrid(double t_start, double t_end, int n_steps)
        : t_start_(t_start), t_end_(t_end), n_steps_(n_steps) {
        if (!(std::isfinite(t_start) && std::isfinite(t_end)))
            throw Error("TimeGrid: non-finite endpoints");
        if (!(t_end > t_start))
            throw Error("TimeGrid: t_end must exceed t_start");
        if (n_steps < 2)
            throw Error("TimeGrid: need at least 2 steps");
        step_ = (t_end - t_start) / n_steps;
        if (!(step_ > 0.0))
            throw Error("TimeGrid: span is not resolvable at this step count");
    }

    double t_start() const { return t_start_; }
    double t_end() const { return t_end_; }
    double step() const { return step_; }
    int n_steps() const { return n_steps_; }
    int n_nodes() const { return n_steps_ + 1; }

    double node(int i) const { return t_start_ + i * step_; }

    bool contains(double t) const {
        const double tol = 1e-9 * (t_end_ - t_start_);
        return t >= t_start_ - tol && t <= t_end_ + tol;
    }

    /// Cell index and fractional offset for t. Off-node times interpolate
    /// linearly; times within 1e-9 of a node snap to it, keeping node
    /// evaluation exact.
    std::pair<int, double> locate(double t) const {
        if (!contains(t))
            throw Error("TimeGrid: time outside grid span");
        double s = (t - t_start_) / step_;
        int i = static_cast<int>(std::floor(s));
        if (i < 0) i = 0;
        if (i >= n_steps_) i = n_steps_ - 1;
        double theta = s - i;
        if (theta < 1e-9) theta = 0.0;
        if (theta > 1.0 - 1e-9) { theta = 0.0; ++i; }
        if (i > n_steps_) i = n_steps_;
        return {i, theta};
    }

    bool operator==(const TimeGrid& o) const {
        return t_start_ == o.t_start_ && t_end_ == o.t_end_ && n_steps_ == o.n_steps_;
    }

private:
    double t_start_, t_end_;
    int n_steps_;
    double step_;
};

/// Vector-valued path sampled on a TimeGrid, one column per node.
/// Evaluation between nodes is piecewise linear; sup-norms are taken over
/// nodes only (that is the norm every test in this project uses).
class Trajectory {
public:
    Trajectory() = default;
    Trajectory(TimeGrid grid, Eigen::MatrixXd values)
        : grid_(std::move(grid)), values_(std::move(values)) {
        if (values_.cols() != grid_->n_nodes())
            throw Error("Trajectory: node count does not match grid");
        if (values_.rows() < 1)
            throw Error("Trajectory: empty state dimension");
    }

    static Trajectory zero(const TimeGrid& g, int dim) {
        return Trajectory(g, Eigen::MatrixXd::Zero(dim, g.n_nodes()));
    }
    static Trajectory constant(const TimeGrid& g, const Eigen::VectorXd& v) {
        return Trajectory(g, v.replicate(1, g.n_nodes()));
    }

    const TimeGrid& grid() const { return *grid_; }
    int dim() const { return static_cast<int>(values_.rows()); }
    int n_nodes() const { return static_cast<int>(values_.cols()); }

    Eigen::MatrixXd::ConstColXpr operator[](int i) const { return values_.col(i); }
    Eigen::MatrixXd::ColXpr operator[](int i) { return values_.col(i); }
    const Eigen::MatrixXd& values() const { return values_; }
    Eigen::MatrixXd& values() { return values_; }

    Eigen::VectorXd eval(double t) const {
        auto [i, theta] = grid_->locate(t);
        if (theta == 0.0) return values_.col(i);
        return (1.0 - theta) * values_.col(i) + theta * values_.col(i + 1);
    }

    double sup_norm() const {
        return values_.colwise().norm().maxCoeff();
    }

    /// Max Euclidean node norm over nodes with node time in [a, b].
    double sup_norm(double a, double b) const {
        const double tol = 1e-9 * (grid_->t_end() - grid_->t_start());
        double m = 0.0;
        bool any = false;
        for (int i = 0; i < n_nodes(); ++i) {
            double t = grid_->node(i);
            if (t < a - tol || t > b + tol) continue;
            m = std::max(m, values_.col(i).norm());
            any = true;
        }
        if (!any) throw Error("Trajectory: no nodes inside [a, b]");
        return m;
    }

    Trajectory resample(const TimeGrid& g) const {
        Eigen::MatrixXd out(dim(), g.n_nodes());
        for (int i = 0; i < g.n_nodes(); ++i) out.col(i) = eval(g.node(i));
        return Trajectory(g, std::move(out));
    }

private:
    std::optional<TimeGrid> grid_;
    Eigen::MatrixXd values_;
};

/// Max node distance between two trajectories on the same grid.
inline double sup_distance(const Trajectory& a, const Trajectory& b) {
    if (!(a.grid() == b.grid()) || a.dim() != b.dim())
        throw Error("sup_distance: mismatched trajectories");
    return (a.values() - b.values()).colwise().norm().maxCoeff();
}

/// Same, restricted to nodes in [lo, hi].
inline double sup_distance(const Trajectory& a, const Trajectory& b, double lo, double hi) {
    if (!(a.grid() == b.grid()) || a.dim() != b.dim())
        throw Error("sup_distance: mismatched trajectories");
    const TimeGrid& g = a.grid();
    const double tol = 1e-9 * (g.t_end() - g.t_start());
    double m = 0.0;
    bool any = false;
    for (int i = 0; i < g.n_nodes(); ++i) {
        double t = g.node(i);
        if (t < lo - tol || t > hi + tol) continue;
        m = std::max(m, (a[i] - b[i]).norm());
        any = true;
    }
    if (!any) throw Error("sup_distance: no nodes inside [lo, hi]");
    return m;
}

/// Matrix-valued path on a TimeGrid (fundamental matrices, Gramians).
class MatrixPath {
public:
    MatrixPath() = default;
    MatrixPath(TimeGrid grid, std::vector<Eigen::MatrixXd> values)
        : grid_(std::move(grid)), values_(std::move(values)) {
        if (static_cast<int>(values_.size()) != grid_->n_nodes())
            throw Error("MatrixPath: node count does not match grid");
        for (const auto& m : values_)
            if (m.rows() != values_.front().rows() || m.cols() != values_.front().cols())
                throw Error("MatrixPath: inconsistent shapes across nodes");
    }

    const TimeGrid& grid() const { return *grid_; }
    int n_nodes() const { return static_cast<int>(values_.size()); }
    int rows() const { return static_cast<int>(values_.front().rows()); }
    int cols() const { return static_cast<int>(values_.front().cols()); }

    const Eigen::MatrixXd& operator[](int i) const { return values_[i]; }
    Eigen::MatrixXd& operator[](int i) { return values_[i]; }

    Eigen::MatrixXd eval(double t) const {
        auto [i, theta] = grid_->locate(t);
        if (theta == 0.0) return values_[i];
        return (1.0 - theta) * values_[i] + theta * values_[i + 1];
    }

private:
    std::optional<TimeGrid> grid_;
    std::vector<Eigen::MatrixXd> values_;
};

/// Cumulative composite-trapezoid integral of a sampled path. The value at
/// node 0 is exactly zero, and the integral over [node a, node b] is defined
/// as the difference of prefix values, which makes additivity exact.
inline Trajectory cumulative_trapezoid(const Trajectory& f) {
    const TimeGrid& g = f.grid();
    const double h2 = 0.5 * g.step();
    Eigen::MatrixXd out(f.dim(), f.n_nodes());
    out.col(0).setZero();
    for (int i = 1; i < f.n_nodes(); ++i)
        out.col(i) = out.col(i - 1) + h2 * (f[i - 1] + f[i]);
    if (!out.allFinite())
        throw Error("cumulative_trapezoid: non-finite integrand");
    return Trajectory(g, std::move(out));
}

inline MatrixPath cumulative_trapezoid(const MatrixPath& f) {
    const TimeGrid& g = f.grid();
    const double h2 = 0.5 * g.step();
    std::vector<Eigen::MatrixXd> out(f.n_nodes());
    out[0] = Eigen::MatrixXd::Zero(f.rows(), f.cols());
    for (int i = 1; i < f.n_nodes(); ++i) {
        out[i] = out[i - 1] + h2 * (f[i - 1] + f[i]);
        if (!out[i].allFinite())
            throw Error("cumulative_trapezoid: non-finite integrand");
    }
    return MatrixPath(g, std::move(out));
}

}  // namespace obsv
