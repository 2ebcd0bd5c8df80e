// Compares the parallel kernels against the serial reference path. Every
// kernel draws per-trial substreams, so the two runs must agree exactly;
// a mismatch is a bug, not noise.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"

#include "scalelab/laws_full_bp.hpp"
#include "scalelab/scaling_params.hpp"
#include "scalelab/simulate.hpp"
#include "scalelab/window_race.hpp"

namespace {

template <class F>
double time_s(F&& f) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool report(const char* name, double ts, double tp, bool match) {
    std::printf("%-18s serial %7.3fs   parallel %7.3fs   speedup %.2fx   %s\n", name, ts, tp,
                tp > 0 ? ts / tp : 0.0, match ? "results match" : "RESULTS DIFFER");
    return match;
}

scl::ScalingParams synthetic_table() {
    scl::ScalingParams p;
    p.dv = 5;
    p.dc = 10;
    p.L = 50;
    p.n_est = 10000;
    p.epsilon_star = 0.4994;
    for (double eps : {0.45, 0.48}) {
        scl::ParamKnot k;
        k.epsilon = eps;
        k.gamma_breve = 2.0;
        k.tau_start_breve = 0.10;
        k.tau_start_tilde = 0.05;
        k.tau_end_tilde = 0.45;
        k.v_pd = 1.0 / eps;
        k.v_bp = 0.19;
        k.gamma_bp = 2.2;
        k.i_start = 25;
        k.i_end = 15;
        k.c_f = 2.2 * (p.epsilon_star - eps);
        p.knots.push_back(k);
    }
    p.nu_breve.value = 0.50;
    p.theta_breve.value = 3.0;
    p.nu_bp.value = 0.41;
    p.theta_bp.value = 2.74;
    p.sigma2.value = 0.118;
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    long frames = 2000;
    long bp_frames = 300;
    long paths = 20000;
    long npd_samples = 20000;
    int workers = 0;

    CLI::App app{"serial reference vs parallel kernels"};
    app.add_option("--frames", frames, "peeling sweep frames");
    app.add_option("--bp-frames", bp_frames, "full-BP sweep frames");
    app.add_option("--paths", paths, "Euler-Maruyama paths");
    app.add_option("--npd-samples", npd_samples, "clock paths for the advance distribution");
    app.add_option("--workers", workers, "parallel worker count, default: all cores");
    CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
    if (workers <= 0) workers = omp_get_max_threads();
#else
    if (workers <= 0) workers = 1;
#endif
    std::printf("parallel path uses %d workers\n", workers);

    bool ok = true;

    {
        scl::ExperimentConfig cfg;
        cfg.ensemble = {5, 10, 50, 1000, scl::Termination::terminated, 20};
        cfg.epsilon_grid = {0.47};
        cfg.decoder = scl::DecoderKind::unlimited;
        cfg.frames = frames;
        cfg.seed = 7;
        cfg.workers = 1;
        scl::SweepResult rs, rp;
        double ts = time_s([&] { rs = scl::run_sweep(cfg); });
        cfg.workers = workers;
        double tp = time_s([&] { rp = scl::run_sweep(cfg); });
        ok &= report("peel sweep", ts, tp,
                     rs.points[0].errors == rp.points[0].errors &&
                         rs.points[0].frames_run == rp.points[0].frames_run);
    }

    {
        scl::ExperimentConfig cfg;
        cfg.ensemble = {5, 10, 50, 1000, scl::Termination::terminated, 20};
        cfg.epsilon_grid = {0.47};
        cfg.decoder = scl::DecoderKind::full_bp;
        cfg.iteration_budget = 175;
        cfg.frames = bp_frames;
        cfg.seed = 7;
        cfg.workers = 1;
        scl::SweepResult rs, rp;
        double ts = time_s([&] { rs = scl::run_sweep(cfg); });
        cfg.workers = workers;
        double tp = time_s([&] { rp = scl::run_sweep(cfg); });
        ok &= report("bp sweep", ts, tp,
                     rs.points[0].errors == rp.points[0].errors &&
                         rs.points[0].frames_run == rp.points[0].frames_run);
    }

    {
        scl::ScalingParams p = synthetic_table();
        scl::NpdDistribution ds, dp;
        double ts = time_s(
            [&] { ds = scl::simulate_npd_iterative(p, 0.47, 1000, 300, npd_samples, 11, 1); });
        double tp = time_s(
            [&] { dp = scl::simulate_npd_iterative(p, 0.47, 1000, 300, npd_samples, 11, workers); });
        bool match = ds.masses.size() == dp.masses.size() && ds.sample_mean == dp.sample_mean;
        for (size_t i = 0; match && i < ds.masses.size(); ++i)
            match = ds.masses[i] == dp.masses[i];
        ok &= report("advance clock", ts, tp, match);
    }

    {
        scl::FpProblem prob;
        prob.m = 0.05;
        prob.b = 0.11;
        prob.sigma1_sq = 2e-4;
        prob.sigma2 = 0.118;
        prob.w_left = -2.0;
        prob.w_right = 18.0;
        prob.ell_star = 48.0;
        prob.tau_star = 538.0;
        prob.v_window = 0.1;
        double es = 0, ep = 0;
        double ts = time_s([&] { es = scl::em_simulate(prob, paths, 0.1, 13, 1); });
        double tp = time_s([&] { ep = scl::em_simulate(prob, paths, 0.1, 13, workers); });
        ok &= report("race paths", ts, tp, es == ep);
    }

    if (!ok) {
        std::printf("parallel kernels disagree with the serial reference\n");
        return 1;
    }
    return 0;
}
