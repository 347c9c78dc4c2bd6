#pragma once

#include <Eigen/Dense>
#include <cfloat>
#include <random>
#include <sstream>
#include <vector>

#include "obsv/linalg.hpp"
#include "obsv/rng.hpp"
#include "obsv/system.hpp"

namespace obsv {

// Reconstruction machinery on an observation window [t0, T]:
//
//   Phi(t, t0)   fundamental matrix of  d/dt Phi = A(t, y(t), u(t)) Phi
//   Psi(t)       observability Gramian  int (C Phi)' (C Phi)
//   Xi(t; d)     drift correction       int (C Phi)'(C Phi) int Phi^{-1} f(., d, .)
//   F_T(t; z)    = Phi(t) Psi(T)^{-1} ( int (C Phi)' y  -  Xi(T; z) )
//                  + Phi(t) int Phi^{-1} f(., z, .)
//
// F_T maps trajectory guesses to trajectories; its fixed point is the true
// state path, and on short enough windows it is a contraction. Everything
// here is pure and deterministic.

/// Window-local bundle: the fundamental matrix and Gramian paths plus the
/// cached node data (output samples, LU factors, output-weighted integral)
/// that the reconstruction formulas reuse.
struct GramianBundle {
    TimeGrid grid;
    MatrixPath phi;        // Phi(t, t0); node 0 is exactly the identity
    MatrixPath psi;        // Gramian path, symmetric, zero at node 0
    Trajectory min_eig;    // smallest eigenvalue of psi per node (1-dim)

    MatrixPath c_phi;      // C(t, u(t)) Phi(t, t0) per node, k x n
    Trajectory y_nodes;    // output record sampled at the window nodes
    Trajectory u_nodes;    // input sampled at the window nodes
    Trajectory r;          // cumulative int (C Phi)' y, n-dim
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> phi_lu;  // per-node factors of Phi

    GramianBundle(TimeGrid g, MatrixPath phi_, MatrixPath psi_, Trajectory min_eig_,
                  MatrixPath c_phi_, Trajectory y_, Trajectory u_, Trajectory r_,
                  std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> lu)
        : grid(std::move(g)), phi(std::move(phi_)), psi(std::move(psi_)),
          min_eig(std::move(min_eig_)), c_phi(std::move(c_phi_)), y_nodes(std::move(y_)),
          u_nodes(std::move(u_)), r(std::move(r_)), phi_lu(std::move(lu)) {}

    int n() const { return phi.rows(); }
    double t0() const { return grid.t_start(); }
    double T() const { return grid.t_end(); }
};

/// Integrates the matrix ODE for Phi(t, t0) along the frozen measured output.
inline MatrixPath fundamental_matrix(const SystemModel& model, const Trajectory& y,
                                     const InputSignal& u, const TimeGrid& grid) {
    auto rhs = [&](double t, const Eigen::MatrixXd& p, Eigen::MatrixXd& dp) {
        dp = model.A(t, y.eval(t), u.eval(t)) * p;
    };
    return integrate_matrix_ode(rhs, Eigen::MatrixXd::Identity(model.n, model.n), grid);
}

/// Gramian path: cumulative trapezoid of (C Phi)'(C Phi), re-symmetrized
/// after every accumulation step.
inline MatrixPath gramian_psi(const MatrixPath& phi, const SystemModel& model,
                              const InputSignal& u) {
    const TimeGrid& g = phi.grid();
    std::vector<Eigen::MatrixXd> integrand(g.n_nodes());
    for (int i = 0; i < g.n_nodes(); ++i) {
        const Eigen::MatrixXd cp = model.C(g.node(i), u.eval(g.node(i))) * phi[i];
        integrand[i] = cp.transpose() * cp;
    }
    MatrixPath cum = cumulative_trapezoid(MatrixPath(g, std::move(integrand)));
    for (int i = 0; i < g.n_nodes(); ++i)
        cum[i] = 0.5 * (cum[i] + cum[i].transpose()).eval();
    return cum;
}

/// Builds the full window bundle in one pass.
inline GramianBundle make_gramian_bundle(const SystemModel& model, const Trajectory& y,
                                         const InputSignal& u, const TimeGrid& grid) {
    MatrixPath phi = fundamental_matrix(model, y, u, grid);

    const int nn = grid.n_nodes();
    Eigen::MatrixXd y_nodes(model.k, nn), u_nodes(std::max(model.m, 1), nn);
    std::vector<Eigen::MatrixXd> cphi(nn), gram(nn);
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> lu;
    lu.reserve(nn);
    Eigen::MatrixXd r_integrand(model.n, nn);
    for (int i = 0; i < nn; ++i) {
        const double t = grid.node(i);
        const Eigen::VectorXd ut = u.eval(t);
        y_nodes.col(i) = y.eval(t);
        u_nodes.col(i).setZero();
        u_nodes.col(i).head(ut.size()) = ut;
        cphi[i] = model.C(t, ut) * phi[i];
        gram[i] = cphi[i].transpose() * cphi[i];
        r_integrand.col(i) = cphi[i].transpose() * y_nodes.col(i);
        lu.emplace_back(phi[i]);
    }

    MatrixPath psi = cumulative_trapezoid(MatrixPath(grid, std::move(gram)));
    Eigen::MatrixXd mineig(1, nn);
    for (int i = 0; i < nn; ++i) {
        psi[i] = 0.5 * (psi[i] + psi[i].transpose()).eval();
        mineig(0, i) = sym_eig_range(psi[i]).first;
    }

    Trajectory r = cumulative_trapezoid(Trajectory(grid, std::move(r_integrand)));
    return GramianBundle(grid, std::move(phi), std::move(psi),
                         Trajectory(grid, std::move(mineig)), MatrixPath(grid, std::move(cphi)),
                         Trajectory(grid, std::move(y_nodes)), Trajectory(grid, std::move(u_nodes)),
                         std::move(r), std::move(lu));
}

struct PeReport {
    bool pass = true;
    int first_fail_node = -1;
    double worst_ratio = 1.0;  // min over nodes of the scaled eigenvalue ratio
};

/// Persistence-of-excitation check: at every node past the first, the
/// diagonally equilibrated Gramian D Psi D (D = diag(Psi_ii^{-1/2})) must have
/// eigenvalue ratio above eps_rel. Equilibration makes the test invariant to
/// the window width: entries of Psi scale with different powers of (t - t0),
/// so a ratio test on the raw matrix would reject every short window, while
/// the scaled ratio is O(1) for healthy systems and 0 for rank-defective ones.
inline PeReport check_pe(const GramianBundle& bundle, double eps_rel) {
    PeReport rep;
    const int n = bundle.n();
    for (int i = 1; i < bundle.grid.n_nodes(); ++i) {
        const Eigen::MatrixXd& P = bundle.psi[i];
        bool node_ok = true;
        double ratio = 0.0;
        for (int j = 0; j < n; ++j)
            if (!(P(j, j) > 0.0)) node_ok = false;
        if (node_ok) {
            Eigen::VectorXd dinv = P.diagonal().array().sqrt().inverse();
            Eigen::MatrixXd N = dinv.asDiagonal() * P * dinv.asDiagonal();
            auto [lo, hi] = sym_eig_range(N);
            ratio = hi > 0.0 ? lo / hi : 0.0;
            node_ok = ratio > eps_rel;
        }
        rep.worst_ratio = std::min(rep.worst_ratio, ratio);
        if (!node_ok && rep.pass) {
            rep.pass = false;
            rep.first_fail_node = i;
        }
    }
    return rep;
}

namespace detail {

/// Inner and outer correction integrals for a trajectory guess d:
///   inner(t) = int_{t0}^{t} Phi(t0, s) f(s, y(s), d(s), u(s)) ds
///   outer(t) = int_{t0}^{t} (C Phi)'(C Phi)(rho) inner(rho) drho
/// Phi(t0, s) is applied as a per-node linear solve of the cached factors.
struct Correction {
    Trajectory inner;
    Trajectory outer;
};

inline Correction correction_integrals(const GramianBundle& b, const SystemModel& model,
                                       const Trajectory& d) {
    const TimeGrid& g = b.grid;
    const int nn = g.n_nodes();
    Eigen::MatrixXd w(model.n, nn);
    for (int i = 0; i < nn; ++i) {
        const Eigen::VectorXd fi = model.f(g.node(i), b.y_nodes[i], d.eval(g.node(i)),
                                           b.u_nodes[i].head(model.m));
        w.col(i) = b.phi_lu[i].solve(fi);
        if (!w.col(i).allFinite())
            throw Error("correction_integrals: fundamental matrix numerically singular at node " +
                        std::to_string(i));
    }
    Trajectory inner = cumulative_trapezoid(Trajectory(g, std::move(w)));

    Eigen::MatrixXd outer_integrand(model.n, nn);
    for (int i = 0; i < nn; ++i)
        outer_integrand.col(i) = b.c_phi[i].transpose() * (b.c_phi[i] * inner[i]);
    Trajectory outer = cumulative_trapezoid(Trajectory(g, std::move(outer_integrand)));
    return {std::move(inner), std::move(outer)};
}

}  // namespace detail

/// Drift-correction path Xi(t; d) on the bundle window; zero at node 0.
inline Trajectory xi_map(const GramianBundle& bundle, const SystemModel& model,
                         const Trajectory& d) {
    return detail::correction_integrals(bundle, model, d).outer;
}

/// One-shot reconstruction of the window-initial state, evaluated with the
/// Gramian at the given node and a trajectory guess d inside the correction.
/// Exact (to quadrature) for models with vanishing drift.
inline Eigen::VectorXd one_shot_initial_state(const GramianBundle& bundle,
                                              const SystemModel& model, const Trajectory& d,
                                              int t_eval_node) {
    if (t_eval_node < 1 || t_eval_node >= bundle.grid.n_nodes())
        throw Error("one_shot_initial_state: evaluation node out of range");
    Trajectory xi = xi_map(bundle, model, d);
    const Eigen::VectorXd q = bundle.r[t_eval_node] - xi[t_eval_node];
    return solve_spd(bundle.psi[t_eval_node], q).solution;
}

/// The window operator F_T applied to a guess z, returned on the bundle grid.
inline Trajectory fixed_point_map(const GramianBundle& bundle, const SystemModel& model,
                                  const Trajectory& z) {
    const int last = bundle.grid.n_nodes() - 1;
    detail::Correction corr = detail::correction_integrals(bundle, model, z);
    const Eigen::VectorXd q = bundle.r[last] - corr.outer[last];
    const Eigen::VectorXd w = solve_spd(bundle.psi[last], q).solution;
    Eigen::MatrixXd out(bundle.n(), bundle.grid.n_nodes());
    for (int i = 0; i <= last; ++i)
        out.col(i) = bundle.phi[i] * (w + corr.inner[i]);
    return Trajectory(bundle.grid, std::move(out));
}

struct ContractionReport {
    double T = 0.0;
    double R = 0.0;
    double ell_target = 0.0;
    double ell_measured = 0.0;
    int n_pairs = 0;
    bool pass = false;
};

namespace detail {

/// Piecewise-linear random trajectory with node values inside the R-ball:
/// breakpoint values are drawn uniformly in the ball and interpolated, so
/// convexity keeps every node inside.
inline Trajectory random_ball_trajectory(const TimeGrid& g, int dim, double radius,
                                         int segments, std::mt19937_64& rng) {
    std::vector<Eigen::VectorXd> bp(segments + 1);
    for (auto& v : bp) v = uniform_in_ball(rng, dim, radius);
    Eigen::MatrixXd vals(dim, g.n_nodes());
    for (int i = 0; i < g.n_nodes(); ++i) {
        const double s = segments * static_cast<double>(i) / g.n_steps();
        int seg = static_cast<int>(std::floor(s));
        if (seg >= segments) seg = segments - 1;
        const double theta = s - seg;
        vals.col(i) = (1.0 - theta) * bp[seg] + theta * bp[seg + 1];
    }
    return Trajectory(g, std::move(vals));
}

}  // namespace detail

/// Measures the contraction modulus of F_T on the R-ball by the worst
/// difference quotient over randomly drawn trajectory pairs. Pairs alternate
/// between independent draws (secant slopes across the ball) and a draw plus
/// a small shift (tangent slopes, which dominate for stiff drifts and would
/// otherwise be missed). Deterministic: each pair has its own derived seed.
inline ContractionReport contraction_modulus(const GramianBundle& bundle, const SystemModel& model,
                                             double radius, double ell_target, int n_pairs,
                                             std::uint64_t seed) {
    if (n_pairs < 32) throw Error("contraction_modulus: need at least 32 pairs");
    ContractionReport rep;
    rep.T = bundle.T();
    rep.R = radius;
    rep.ell_target = ell_target;
    rep.n_pairs = n_pairs;

    const int segments = 4;
    for (int p = 0; p < n_pairs; ++p) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(p)));
        Trajectory d1, d2;
        if (p % 2 == 0) {
            d1 = detail::random_ball_trajectory(bundle.grid, model.n, radius, segments, rng);
            d2 = detail::random_ball_trajectory(bundle.grid, model.n, radius, segments, rng);
        } else {
            const double shrink = 1.0 - 1e-3;
            d1 = detail::random_ball_trajectory(bundle.grid, model.n, shrink * radius, segments, rng);
            Eigen::VectorXd dir(model.n);
            std::normal_distribution<double> gauss;
            for (int i = 0; i < model.n; ++i) dir[i] = gauss(rng);
            dir *= (0.99e-3 * radius) / dir.norm();
            d2 = d1;
            d2.values().colwise() += dir;
        }
        const double den = sup_distance(d1, d2);
        if (den < 1e-12 * std::max(1.0, radius)) continue;
        Trajectory f1 = fixed_point_map(bundle, model, d1);
        Trajectory f2 = fixed_point_map(bundle, model, d2);
        // the operator norm lives on (t0, T]; node 0 is the open-end limit
        const double num = sup_distance(f1, f2, bundle.grid.node(1), bundle.grid.t_end());
        rep.ell_measured = std::max(rep.ell_measured, num / den);
    }
    rep.pass = rep.ell_measured <= ell_target;
    return rep;
}

struct ContractionSearchParams {
    double ell = 0.5;         // target modulus, in (0, 1/2]
    double t_hi = 0.0;        // first (largest) candidate window end
    double gamma = 0.25;      // geometric shrink factor, in (0, 1)
    int window_nodes = 128;   // steps per candidate window
    int n_pairs = 32;
    double eps_rel_pe = 1e-10;
    std::uint64_t seed = 0;
};

struct ContractionTimeResult {
    double T = 0.0;
    int candidates_tried = 0;
    GramianBundle bundle;
    ContractionReport report;
    PeReport pe;
};

/// Searches for a window end T with both excitation and contraction verified,
/// walking T - t0 down geometrically from t_hi. Every candidate gets a fresh
/// uniform window grid (so each window keeps full node density no matter how
/// small it gets) with the measured record resampled onto it. Fails with
/// GridTooCoarse once the window span drops below what double-precision time
/// arithmetic can resolve.
inline ContractionTimeResult find_contraction_time(const SystemModel& model,
                                                   const Trajectory& y_record,
                                                   const InputSignal& u, double radius,
                                                   const ContractionSearchParams& p) {
    if (!(p.ell > 0.0 && p.ell <= 0.5))
        throw Error("find_contraction_time: target modulus must lie in (0, 1/2]");
    if (!(p.gamma > 0.0 && p.gamma < 1.0))
        throw Error("find_contraction_time: shrink factor must lie in (0, 1)");
    if (p.window_nodes < 64)
        throw Error("find_contraction_time: need at least 64 nodes per window");

    const double t0 = y_record.grid().t_start();
    if (!(p.t_hi > t0) || !y_record.grid().contains(p.t_hi))
        throw Error("find_contraction_time: t_hi outside the measured record");

    const double floor_span = 1024.0 * DBL_EPSILON * std::max(1.0, std::abs(t0));
    std::string last_reason = "no candidate evaluated";
    double span = p.t_hi - t0;
    for (int j = 0;; ++j, span *= p.gamma) {
        if (span < floor_span) {
            std::ostringstream os;
            os << "find_contraction_time: window span fell below the resolvable floor ("
               << floor_span << ") after " << j << " candidates; last failure: " << last_reason
               << ". Densify the record or reduce the radius.";
            throw GridTooCoarse(os.str());
        }
        const TimeGrid g(t0, t0 + span, p.window_nodes);
        GramianBundle bundle = make_gramian_bundle(model, y_record, u, g);
        PeReport pe = check_pe(bundle, p.eps_rel_pe);
        if (!pe.pass) {
            std::ostringstream os;
            os << "excitation check failed at T=" << g.t_end()
               << " (node " << pe.first_fail_node << ", ratio " << pe.worst_ratio << ")";
            last_reason = os.str();
            continue;
        }
        ContractionReport rep = contraction_modulus(bundle, model, radius, p.ell, p.n_pairs,
                                                    mix_seed(p.seed, static_cast<std::uint64_t>(j)));
        if (rep.pass) {
            return {g.t_end(), j + 1, std::move(bundle), rep, pe};
        }
        std::ostringstream os;
        os << "contraction modulus " << rep.ell_measured << " > " << p.ell
           << " at T=" << g.t_end() << " (R=" << radius << ")";
        last_reason = os.str();
    }
}

}  // namespace obsv
