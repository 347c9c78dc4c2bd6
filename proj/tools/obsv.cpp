// obsv: scenario-driven driver for the state-estimation library.
//
//   obsv simulate --scenario s.scn [--out dir]            -> truth.csv
//   obsv check    --scenario s.scn [--out dir]            -> check.json
//   obsv estimate --scenario s.scn [--out dir] [--seed N] -> estimates.csv, summary.json
//   obsv observe  --scenario s.scn [--out dir] [--strict] -> observer.csv, resets.json
//
// Exit codes: 0 ok, 2 scenario/config error, 3 numerical failure, 4 a check
// verdict failed.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "obsv/io.hpp"
#include "obsv/log.hpp"
#include "obsv/scenario.hpp"

namespace fs = std::filesystem;
using namespace obsv;

namespace {

struct CommonOpts {
    std::string scenario_path;
    std::string out_dir;  // empty: use scenario's
    std::optional<std::uint64_t> seed;
    bool strict = false;
};

ScenarioConfig load(const CommonOpts& opts) {
    ScenarioConfig cfg = load_scenario(opts.scenario_path);
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (opts.seed) {
        cfg.est.seed = *opts.seed;
        if (cfg.observer) cfg.observer->params.est.seed = *opts.seed;
    }
    return cfg;
}

fs::path out_path(const ScenarioConfig& cfg, const std::string& file) {
    return fs::path(cfg.out_dir) / file;
}

int cmd_simulate(const CommonOpts& opts) {
    ScenarioConfig cfg = load(opts);
    SystemModel model = cfg.build_model();
    auto [x, y] = simulate_truth(model, cfg.x0, cfg.input, cfg.truth_grid());
    const fs::path p = out_path(cfg, "truth.csv");
    write_atomic(p, truth_csv(x, y, cfg.input, cfg.csv_stride));
    std::printf("simulate %s: %d nodes on [%.17g, %.17g] -> %s\n", cfg.name.c_str(),
                cfg.truth_grid().n_nodes(), cfg.t0, cfg.t_end, p.string().c_str());
    return 0;
}

int cmd_check(const CommonOpts& opts) {
    ScenarioConfig cfg = load(opts);
    SystemModel model = cfg.build_model();

    const Eigen::VectorXd u0 = cfg.input.eval(cfg.t0);
    const double y0 = (model.C(cfg.t0, u0) * cfg.x0)(0);
    const H2Report h2 = check_h2(model, cfg.t0, y0, u0);

    auto [x_rec, y_rec] = simulate_truth(model, cfg.x0, cfg.input, cfg.record_grid());
    const TimeGrid check_grid(cfg.t0, cfg.est.t_hi, cfg.est.window_nodes);
    GramianBundle bundle = make_gramian_bundle(model, y_rec, cfg.input, check_grid);
    const PeReport pe = check_pe(bundle, cfg.est.eps_rel_pe);

    LipschitzBox box;
    box.t_lo = cfg.t0;
    box.t_hi = cfg.est.t_hi;
    box.y_lo = y_rec.values().minCoeff() - 1.0;
    box.y_hi = y_rec.values().maxCoeff() + 1.0;
    box.radius = cfg.est.R;
    box.u_lo.resize(model.m);
    box.u_hi.resize(model.m);
    box.u_lo.setConstant(std::numeric_limits<double>::max());
    box.u_hi.setConstant(std::numeric_limits<double>::lowest());
    for (int i = 0; i < check_grid.n_nodes(); ++i) {
        const Eigen::VectorXd ut = cfg.input.eval(check_grid.node(i));
        box.u_lo = box.u_lo.cwiseMin(ut);
        box.u_hi = box.u_hi.cwiseMax(ut);
    }
    const double lip = estimate_lipschitz(model, box, cfg.lipschitz_samples,
                                          mix_seed(cfg.est.seed, 0x11b));

    const ContractionReport con = contraction_modulus(bundle, model, cfg.est.R, cfg.est.ell,
                                                      cfg.est.n_pairs, mix_seed(cfg.est.seed, 0xc0));

    Json j;
    j["scenario"] = cfg.name;
    j["command"] = "check";
    Json h2j;
    h2j["pass"] = h2.pass;
    h2j["product"] = h2.product;
    j["H2"] = h2j;
    Json pej;
    pej["pass"] = pe.pass;
    pej["first_fail_node"] = pe.first_fail_node;
    pej["worst_ratio"] = json_num(pe.worst_ratio);
    j["PE"] = pej;
    Json lj;
    lj["C"] = lip;
    lj["radius"] = box.radius;
    lj["samples"] = cfg.lipschitz_samples;
    j["lipschitz"] = lj;
    Json cj;
    cj["T"] = con.T;
    cj["R"] = con.R;
    cj["ell_target"] = con.ell_target;
    cj["ell_measured"] = con.ell_measured;
    cj["n_pairs"] = con.n_pairs;
    cj["pass"] = con.pass;
    j["contraction"] = cj;

    const fs::path p = out_path(cfg, "check.json");
    write_atomic(p, j.dump(2) + "\n");

    std::printf("check %s: H2 %s (product %.6g), PE %s, lipschitz C=%.6g, contraction %s "
                "(ell=%.6g at T=%.6g) -> %s\n",
                cfg.name.c_str(), h2.pass ? "pass" : "FAIL", h2.product,
                pe.pass ? "pass" : "FAIL", lip, con.pass ? "pass" : "FAIL", con.ell_measured,
                con.T, p.string().c_str());

    if (!h2.pass) { std::fprintf(stderr, "verdict failed: H2\n"); return 4; }
    if (!pe.pass) { std::fprintf(stderr, "verdict failed: PE\n"); return 4; }
    if (!con.pass) { std::fprintf(stderr, "verdict failed: contraction\n"); return 4; }
    return 0;
}

int cmd_estimate(const CommonOpts& opts) {
    ScenarioConfig cfg = load(opts);
    SystemModel model = cfg.build_model();

    auto [x_rec, y_rec] = simulate_truth(model, cfg.x0, cfg.input, cfg.record_grid());
    EstimatorParams ep = cfg.est;
    ep.truth = &x_rec;

    EstimationRun run = cfg.est_case == 'I' ? estimate_known_bound(model, y_rec, cfg.input, ep)
                                            : estimate_general(model, y_rec, cfg.input, ep);

    const Eigen::VectorXd u0 = cfg.input.eval(cfg.t0);
    const double y0 = (model.C(cfg.t0, u0) * cfg.x0)(0);
    const H2Report h2 = check_h2(model, cfg.t0, y0, u0);

    RunSummary s;
    s.scenario = cfg.name;
    s.command = "estimate";
    s.kase = cfg.est_case == 'I' ? "I" : "II";
    s.ell = cfg.est.ell;
    s.R = cfg.est.R;
    s.seed = cfg.est.seed;
    s.h2_pass = h2.pass;
    s.h2_product = h2.product;
    s.pe_pass = !run.iterations.empty();  // every accepted window passed its excitation check
    s.converged = run.converged;
    s.dead_beat = run.dead_beat;
    s.failed = run.failed;
    s.failure = run.failure;
    s.iterations = run.iterations;
    s.final_estimate = run.final_estimate;
    s.bundles_built = run.bundles_built;

    write_atomic(out_path(cfg, "estimates.csv"), estimates_csv(run, &cfg.x0));
    write_atomic(out_path(cfg, "summary.json"), s.to_json().dump(2) + "\n");

    const double final_err =
        run.final_estimate.size() ? (run.final_estimate - cfg.x0).norm()
                                  : std::numeric_limits<double>::quiet_NaN();
    std::printf("estimate %s (case %s): %zu iterations, converged=%s%s, final error %.6g -> %s\n",
                cfg.name.c_str(), s.kase.c_str(), run.iterations.size(),
                run.converged ? "yes" : "no", run.dead_beat ? " (dead-beat)" : "", final_err,
                out_path(cfg, "summary.json").string().c_str());

    if (run.failed) {
        std::fprintf(stderr, "estimator failed: %s\n", run.failure.c_str());
        return 3;
    }
    return 0;
}

int cmd_observe(const CommonOpts& opts) {
    ScenarioConfig cfg = load(opts);
    if (!cfg.observer)
        throw ConfigError("scenario has no [observer] section", 0, "observer");
    SystemModel model = cfg.build_model();

    HybridParams hp = cfg.observer->params;
    if (!hp.lipschitz_override && opts.strict) {
        std::fprintf(stderr,
                     "observe: global Lipschitz constant is sampled, not certified; supply "
                     "observer.lipschitz_C or drop --strict\n");
        return 3;
    }

    HybridResult res = run_hybrid_observer(model, cfg.x0, cfg.input, hp);
    if (res.lipschitz_estimated)
        log_warn("global Lipschitz constant estimated by sampling (C=%.6g); supply "
                 "observer.lipschitz_C to certify it", res.C_global);

    write_atomic(out_path(cfg, "observer.csv"), observer_csv(res, cfg.observer->csv_stride));
    write_atomic(out_path(cfg, "resets.json"), resets_json(res, cfg.name).dump(2) + "\n");

    const double final_err = res.resets.back().error;
    std::printf("observe %s: %d resets (sigma=%.6g), final reset error %.6g -> %s\n",
                cfg.name.c_str(), res.schedule.n_resets, res.schedule.sigma, final_err,
                out_path(cfg, "resets.json").string().c_str());

    bool gaps = false;
    for (const auto& r : res.resets) gaps = gaps || !r.estimate_available;
    if (gaps || res.est_run.failed) {
        std::fprintf(stderr, "observe: estimation gaps in one or more windows%s%s\n",
                     res.est_run.failure.empty() ? "" : ": ", res.est_run.failure.c_str());
        return 3;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"state estimation for triangular nonlinear systems"};
    app.require_subcommand(1);

    CommonOpts opts;
    int (*handler)(const CommonOpts&) = nullptr;

    for (const auto& [name, desc, fn] :
         {std::tuple{"simulate", "integrate the truth system and write truth.csv", &cmd_simulate},
          std::tuple{"check", "run H2 / excitation / Lipschitz / contraction checks", &cmd_check},
          std::tuple{"estimate", "run the window estimation algorithm", &cmd_estimate},
          std::tuple{"observe", "run the hybrid reset observer", &cmd_observe}}) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--scenario", opts.scenario_path, "scenario file")->required();
        sub->add_option("--out", opts.out_dir, "output directory (overrides scenario)");
        sub->add_option("--seed", opts.seed, "seed override");
        sub->add_flag("--strict", opts.strict, "treat warnings as errors");
        sub->callback([&handler, fn = fn] { handler = fn; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        return handler(opts);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s", e.what());
        if (e.line > 0) std::fprintf(stderr, " (line %d)", e.line);
        if (!e.field.empty()) std::fprintf(stderr, " [%s]", e.field.c_str());
        std::fprintf(stderr, "\n");
        return 2;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "config error: %s (byte %zu)\n", e.what(), e.offset);
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    }
}
