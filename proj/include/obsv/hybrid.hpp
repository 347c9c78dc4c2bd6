#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "obsv/estimate.hpp"

namespace obsv {

// Hybrid reset observer: a copy of the plant dynamics integrated between the
// reset instants t0 + nu*sigma and re-initialized at each reset to a value
// m_nu chained forward from increasingly accurate window estimates of the
// initial state. The estimation error at the resets decays because the
// per-reset estimate tightens faster than the forward propagation amplifies.

/// Reset timing plus the certificate sequences: the global Lipschitz constant
/// C, windowed growth factors C_nu = exp(h C)^(nu+1) and decreasing moduli
/// ell_nu = min(1/2, q^nu / C_{nu+2}), chosen so ell_{nu-1} C_nu -> 0.
struct ResetSchedule {
    double t0 = 0.0;
    double sigma = 0.0;
    int n_resets = 0;
    double C_global = 0.0;
    double q = 0.5;
    std::vector<double> ell_seq;  // ell_0 .. ell_{n_resets-1}
    std::vector<double> C_seq;    // C_0 .. C_{n_resets-1}

    static ResetSchedule build(double t0, double sigma, int n_resets, double C_global,
                               double q = 0.5) {
        if (!(sigma > 0.0)) throw Error("ResetSchedule: sigma must be positive");
        if (n_resets < 1) throw Error("ResetSchedule: need at least one reset");
        if (!(C_global >= 0.0)) throw Error("ResetSchedule: negative Lipschitz constant");
        if (!(q > 0.0 && q < 1.0)) throw Error("ResetSchedule: q must lie in (0, 1)");
        ResetSchedule s;
        s.t0 = t0;
        s.sigma = sigma;
        s.n_resets = n_resets;
        s.C_global = C_global;
        s.q = q;
        const double h = t0 + sigma;
        auto growth = [&](int nu) {  // exp(h C)^(nu+1), saturated instead of overflowing
            return std::exp(std::min(700.0, h * C_global * (nu + 1)));
        };
        for (int nu = 0; nu < n_resets; ++nu) {
            s.C_seq.push_back(growth(nu));
            s.ell_seq.push_back(std::min(0.5, std::pow(q, nu) / growth(nu + 2)));
        }
        return s;
    }

    /// The decay certificate ell_{nu-1} * C_nu for nu >= 1.
    double product(int nu) const {
        if (nu < 1 || nu >= n_resets) return std::numeric_limits<double>::quiet_NaN();
        return ell_seq[nu - 1] * C_seq[nu];
    }
};

struct ResetRecord {
    int nu = 0;
    double instant = 0.0;
    Eigen::VectorXd m;
    double error = std::numeric_limits<double>::quiet_NaN();  // |m - x_true| at the reset
    double window_max_error = std::numeric_limits<double>::quiet_NaN();
    double ell_target = 0.0;
    double schedule_product = std::numeric_limits<double>::quiet_NaN();
    int est_iterations = 0;
    double est_delta = std::numeric_limits<double>::quiet_NaN();
    bool estimate_available = true;
};

struct ObserverTrace {
    Trajectory xhat;
    std::vector<int> reset_nodes;
};

struct HybridParams {
    double t0 = 0.0;
    double sigma = 0.5;
    int n_resets = 8;
    int span_steps = 1 << 17;      // observer span grid; must be divisible by n_resets
    int record_steps = 1 << 20;    // estimation record grid on [t0, est.t_hi]
    int k_base = 3;                // Case-I iterations backing the first reset
    int k_step = 1;                // extra iterations per subsequent reset
    double q = 0.5;
    std::optional<double> lipschitz_override;
    int lipschitz_samples = 20000;
    bool perfect_estimates = false;  // test hook: xi_nu := true initial state
    EstimatorParams est;
};

struct HybridResult {
    ResetSchedule schedule;
    std::vector<ResetRecord> resets;
    ObserverTrace trace;
    Trajectory x_true;   // on the span grid
    Trajectory y_span;
    double C_global = 0.0;
    bool lipschitz_estimated = false;  // sampled rather than user-certified
    EstimationRun est_run;
    std::vector<Eigen::VectorXd> xi_seq;
};

/// Reset values m_nu: m_0 = xi_0 and m_nu = the estimate xi_nu pushed forward
/// across the nu prior windows, one window integration at a time.
inline std::vector<Eigen::VectorXd> build_reset_values(const SystemModel& model,
                                                       const Trajectory& y_span,
                                                       const InputSignal& u,
                                                       const ResetSchedule& schedule,
                                                       const std::vector<Eigen::VectorXd>& xi_seq,
                                                       int steps_per_window) {
    if (static_cast<int>(xi_seq.size()) < schedule.n_resets)
        throw Error("build_reset_values: need one estimate per reset");
    std::vector<Eigen::VectorXd> m(schedule.n_resets);
    for (int nu = 0; nu < schedule.n_resets; ++nu) {
        Eigen::VectorXd omega = xi_seq[nu];
        for (int w = 0; w < nu; ++w) {
            const TimeGrid wg(schedule.t0 + w * schedule.sigma,
                              schedule.t0 + (w + 1) * schedule.sigma, steps_per_window);
            omega = forward_propagate(model, omega, y_span, u, wg)[steps_per_window];
        }
        m[nu] = omega;
    }
    return m;
}

inline HybridResult run_hybrid_observer(const SystemModel& model, const Eigen::VectorXd& x0_true,
                                        const InputSignal& u, const HybridParams& p) {
    if (p.span_steps % p.n_resets != 0)
        throw Error("run_hybrid_observer: span_steps must be divisible by n_resets");
    if (!(p.est.t_hi > p.t0))
        throw Error("run_hybrid_observer: estimation horizon must lie past t0");
    const int steps_per_window = p.span_steps / p.n_resets;

    HybridResult out;

    const TimeGrid g_span(p.t0, p.t0 + p.n_resets * p.sigma, p.span_steps);
    auto [x_true, y_span] = simulate_truth(model, x0_true, u, g_span);

    const TimeGrid g_rec(p.t0, p.est.t_hi, p.record_steps);
    auto [x_rec, y_rec] = simulate_truth(model, x0_true, u, g_rec);

    if (p.lipschitz_override) {
        out.C_global = *p.lipschitz_override;
    } else {
        LipschitzBox box;
        box.t_lo = p.t0;
        box.t_hi = g_span.t_end();
        box.y_lo = y_span.values().minCoeff() - 1.0;
        box.y_hi = y_span.values().maxCoeff() + 1.0;
        box.radius = x_true.sup_norm() + 2.0;
        box.u_lo.resize(model.m);
        box.u_hi.resize(model.m);
        box.u_lo.setConstant(std::numeric_limits<double>::max());
        box.u_hi.setConstant(std::numeric_limits<double>::lowest());
        for (int i = 0; i < g_span.n_nodes(); i += std::max(1, g_span.n_nodes() / 1024)) {
            const Eigen::VectorXd ut = u.eval(g_span.node(i));
            box.u_lo = box.u_lo.cwiseMin(ut);
            box.u_hi = box.u_hi.cwiseMax(ut);
        }
        out.C_global = estimate_lipschitz(model, box, p.lipschitz_samples,
                                          mix_seed(p.est.seed, 0xC11));
        out.lipschitz_estimated = true;
    }

    out.schedule = ResetSchedule::build(p.t0, p.sigma, p.n_resets, out.C_global, p.q);

    // One estimation run over the initial record backs every reset; reset nu
    // takes the iterate after k_base + nu*k_step contraction steps, so each
    // reset works from a strictly tighter estimate of the same initial state.
    const int needed = p.k_base + p.k_step * (p.n_resets - 1);
    std::vector<Eigen::VectorXd> xi(p.n_resets);
    std::vector<int> k_used(p.n_resets);
    std::vector<double> deltas(p.n_resets, std::numeric_limits<double>::quiet_NaN());
    std::vector<bool> available(p.n_resets, true);
    if (p.perfect_estimates) {
        for (int nu = 0; nu < p.n_resets; ++nu) {
            xi[nu] = x0_true;
            k_used[nu] = 0;
        }
    } else {
        EstimatorParams ep = p.est;
        ep.n_iters = needed;
        ep.stop_on_converged = false;
        ep.truth = &x_rec;
        out.est_run = estimate_known_bound(model, y_rec, u, ep);
        const int have = static_cast<int>(out.est_run.iterations.size());
        if (have < 1)
            throw Error("run_hybrid_observer: estimation produced no iterations");
        for (int nu = 0; nu < p.n_resets; ++nu) {
            const int want = p.k_base + p.k_step * nu;
            const int k = std::min(want, have);
            available[nu] = (k == want);
            k_used[nu] = k;
            xi[nu] = out.est_run.iterations[k - 1].xi;
            deltas[nu] = out.est_run.iterations[k - 1].delta_xi;
        }
    }
    out.xi_seq = xi;

    std::vector<Eigen::VectorXd> m =
        build_reset_values(model, y_span, u, out.schedule, xi, steps_per_window);

    // Observer copy: integrate each window from its reset value, right-
    // continuous at the reset instants.
    Eigen::MatrixXd xhat(model.n, g_span.n_nodes());
    std::vector<int> reset_nodes(p.n_resets);
    for (int nu = 0; nu < p.n_resets; ++nu) {
        const int i0 = nu * steps_per_window;
        reset_nodes[nu] = i0;
        const TimeGrid wg(g_span.node(i0), g_span.node(i0 + steps_per_window), steps_per_window);
        Trajectory seg = forward_propagate(model, m[nu], y_span, u, wg);
        for (int s = 0; s <= steps_per_window; ++s) xhat.col(i0 + s) = seg[s];
    }

    out.trace.xhat = Trajectory(g_span, std::move(xhat));
    out.trace.reset_nodes = reset_nodes;

    for (int nu = 0; nu < p.n_resets; ++nu) {
        ResetRecord rec;
        rec.nu = nu;
        rec.instant = g_span.node(reset_nodes[nu]);
        rec.m = m[nu];
        rec.error = (m[nu] - x_true[reset_nodes[nu]]).norm();
        double wmax = 0.0;
        for (int s = 0; s <= steps_per_window; ++s) {
            const int i = reset_nodes[nu] + s;
            wmax = std::max(wmax, (out.trace.xhat[i] - x_true[i]).norm());
        }
        rec.window_max_error = wmax;
        rec.ell_target = out.schedule.ell_seq[nu];
        rec.schedule_product = out.schedule.product(nu);
        rec.est_iterations = k_used[nu];
        rec.est_delta = deltas[nu];
        rec.estimate_available = available[nu];
        out.resets.push_back(std::move(rec));
    }

    out.x_true = std::move(x_true);
    out.y_span = std::move(y_span);
    return out;
}

}  // namespace obsv
