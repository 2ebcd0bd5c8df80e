#include "scalelab/window_race.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <vector>

#include "scalelab/laws_full_bp.hpp"
#include "scalelab/rng.hpp"
#include "scalelab/util.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace scl {

double FpProblem::stationary_sd() const {
    return b > 0 ? std::sqrt(sigma1_sq / (2.0 * b)) : 0.0;
}

void FpProblem::validate() const {
    if (!(b > 0)) throw spec_error("speed relaxation rate must be positive");
    if (!(sigma1_sq > 0)) throw spec_error("speed noise power must be positive");
    if (!(w_left < w_right)) throw spec_error("barriers out of order");
    if (!(tau_star > 0)) throw spec_error("race duration must be positive");
    if (!(stationary_sd() > 0)) throw spec_error("stationary speed spread must be positive");
}

double adjusted_window(const ScalingParams& params, double epsilon, int W, int I_s) {
    if (W < 1 || I_s < 1) throw spec_error("window width and slide interval must be at least 1");
    ParamKnot k = params.at(epsilon);
    double vw = 1.0 / I_s;
    double wp = (W - (k.i_start + k.i_end) * vw) * k.v_bp / (k.v_bp + vw);
    return std::clamp(wp, 0.0, static_cast<double>(W));
}

FpProblem build_problem(const ScalingParams& params, double epsilon, double N, int L,
                        const WindowConfig& cfg) {
    if (cfg.W < 1 || cfg.I_s < 1 || cfg.I_in < 0) throw spec_error("invalid window configuration");
    if (N <= 0) throw spec_error("block length must be positive");
    if (L < 2) throw spec_error("chain too short for a window race");
    ParamKnot k = params.at(epsilon);
    double gap = params.epsilon_star - epsilon;
    if (!(gap > 0)) throw spec_error("erasure rate must sit below the threshold");

    FpProblem pr;
    pr.v_window = 1.0 / cfg.I_s;
    pr.m = k.c_f * k.v_pd - pr.v_window;
    pr.b = params.theta_bp.value * gap;
    pr.sigma1_sq = 2.0 * params.theta_bp.value * gap * k.v_pd * k.v_pd * params.nu_bp.value / N;
    pr.sigma2 = params.sigma2.value;
    pr.ell_star = cfg.I_in - k.i_start + 1.0 / (k.c_f * k.v_pd);
    pr.w_left = 1.0 - pr.ell_star * pr.v_window;
    pr.w_right = pr.w_left + cfg.W;
    pr.tau_star = pr.ell_star + static_cast<double>(L - 1) * cfg.I_s;
    pr.validate();
    if (pr.m <= -4.0 * pr.stationary_sd() * pr.b)
        std::cerr << "[window] warning: mean relative speed " << pr.m
                  << " is deeply negative, the window outruns the wave almost surely\n";
    return pr;
}

namespace {

// initial state: correlated Gaussian in (speed, position) centered at (m, 0),
// truncated to the grid and renormalized; degenerate spreads collapse onto the
// nearest cell row/column
void fill_initial_density(PdfField& f, const FpProblem& pr) {
    const double de = f.d_eta(), dp = f.d_pl();
    const double sst = pr.stationary_sd();
    const double rho = pr.init_rho, delta = pr.init_delta;
    auto eta_c = [&](int i) { return f.eta_lo + (i + 0.5) * de; };
    auto pl_c = [&](int j) { return f.pl_lo + (j + 0.5) * dp; };
    auto clampi = [](long v, int n) { return static_cast<int>(std::clamp<long>(v, 0, n - 1)); };

    if (sst > 0 && delta > 0) {
        if (!(std::abs(rho) < 1)) throw spec_error("initial correlation must lie inside (-1, 1)");
        const double r2 = 1.0 - rho * rho;
        for (int i = 0; i < f.n_eta; ++i) {
            double x = (eta_c(i) - pr.m) / sst;
            for (int j = 0; j < f.n_pl; ++j) {
                double y = pl_c(j) / delta;
                f.at(i, j) = std::exp(-0.5 * (x * x - 2.0 * rho * x * y + y * y) / r2);
            }
        }
    } else {
        int i0 = clampi(std::lround((pr.m - f.eta_lo) / de - 0.5), f.n_eta);
        int j0 = clampi(std::lround((0.0 - f.pl_lo) / dp - 0.5), f.n_pl);
        if (sst > 0) {
            for (int i = 0; i < f.n_eta; ++i) {
                double x = (eta_c(i) - pr.m) / sst;
                f.at(i, j0) = std::exp(-0.5 * x * x);
            }
        } else if (delta > 0) {
            for (int j = 0; j < f.n_pl; ++j) {
                double y = pl_c(j) / delta;
                f.at(i0, j) = std::exp(-0.5 * y * y);
            }
        } else {
            f.at(i0, j0) = 1.0;
        }
    }
    double s = 0;
    for (double v : f.density) s += v;
    if (!(s > 0)) throw estimation_error("initial race density has no support on the grid");
    double scale = 1.0 / (s * de * dp);
    for (double& v : f.density) v *= scale;
    f.mass = 1.0;
    f.time = 0.0;
}

}  // namespace

FpSolution fp_solve(const FpProblem& problem, const FpOptions& opts) {
    if (!(problem.b > 0)) throw spec_error("speed relaxation rate must be positive");
    if (!(problem.w_right > problem.w_left)) throw spec_error("barriers out of order");
    if (!(problem.tau_star > 0)) throw spec_error("race duration must be positive");
    if (problem.sigma1_sq < 0 || problem.sigma2 < 0) throw spec_error("noise powers must be non-negative");
    if (!(opts.dt > 0) || opts.n_eta < 3 || opts.n_pl_per_w < 1 || !(opts.tol > 0))
        throw spec_error("invalid solver options");

    FpSolution sol;
    PdfField& f = sol.field;
    const double sst = problem.stationary_sd();
    const double half_eta = std::max(4.0 * sst, 1e-9 * (std::abs(problem.m) + 1.0));
    f.eta_lo = problem.m - half_eta;
    f.eta_hi = problem.m + half_eta;
    f.pl_lo = problem.w_left;
    f.pl_hi = problem.w_right;
    f.n_eta = opts.n_eta;
    f.n_pl = std::max(4, static_cast<int>(std::lround(opts.n_pl_per_w * (problem.w_right - problem.w_left))));
    f.density.assign(static_cast<size_t>(f.n_eta) * f.n_pl, 0.0);
    fill_initial_density(f, problem);

    const int ne = f.n_eta, np = f.n_pl;
    const double de = f.d_eta(), dp = f.d_pl();
    const double vol = de * dp;
    const double d_eta_diff = problem.sigma1_sq / 2.0;
    const double d_pl_diff = problem.sigma2 * problem.sigma2 / 2.0;
    const long n = static_cast<long>(ne) * np;
    auto idx = [&](int i, int j) { return static_cast<long>(i) * np + j; };
    auto eta_c = [&](int i) { return f.eta_lo + (i + 0.5) * de; };

    // generator A: dp/dtau = A p, finite-volume with upwind convection and
    // central diffusion; all boundary faces carry zero flux except the
    // absorbing face at pl_lo (Dirichlet zero through a ghost value)
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(5 * n));
    for (int i = 0; i < ne; ++i) {
        // speed-direction faces between rows i and i+1
        if (i + 1 < ne) {
            double u = -problem.b * (f.eta_lo + (i + 1) * de - problem.m);
            double c_lo = std::max(u, 0.0) + d_eta_diff / de;
            double c_hi = std::min(u, 0.0) - d_eta_diff / de;
            for (int j = 0; j < np; ++j) {
                long a = idx(i, j), bcell = idx(i + 1, j);
                trip.emplace_back(a, a, -c_lo / de);
                trip.emplace_back(a, bcell, -c_hi / de);
                trip.emplace_back(bcell, a, c_lo / de);
                trip.emplace_back(bcell, bcell, c_hi / de);
            }
        }
        double v = eta_c(i);
        // position-direction faces between columns j and j+1
        double c_lo = std::max(v, 0.0) + d_pl_diff / dp;
        double c_hi = std::min(v, 0.0) - d_pl_diff / dp;
        for (int j = 0; j + 1 < np; ++j) {
            long a = idx(i, j), bcell = idx(i, j + 1);
            trip.emplace_back(a, a, -c_lo / dp);
            trip.emplace_back(a, bcell, -c_hi / dp);
            trip.emplace_back(bcell, a, c_lo / dp);
            trip.emplace_back(bcell, bcell, c_hi / dp);
        }
        // absorbing face: outflow only, no inflow from the empty ghost
        double c_abs = std::min(v, 0.0) - 2.0 * d_pl_diff / dp;
        trip.emplace_back(idx(i, 0), idx(i, 0), c_abs / dp);
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    trip.clear();
    trip.shrink_to_fit();
    Eigen::SparseMatrix<double> id(n, n);
    id.setIdentity();

    long nfull = static_cast<long>(std::floor(problem.tau_star / opts.dt + 1e-12));
    double rem = problem.tau_star - nfull * opts.dt;
    if (rem < 1e-12 * std::max(1.0, problem.tau_star)) rem = 0;

    using Solver = Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>>;
    Solver full;
    full.setTolerance(opts.tol);
    Eigen::SparseMatrix<double> m_full;
    if (nfull > 0) {
        m_full = id - opts.dt * A;
        full.compute(m_full);
        if (full.info() != Eigen::Success) throw estimation_error("race stepping matrix factorization failed");
    }

    Eigen::VectorXd p(n);
    for (long k = 0; k < n; ++k) p[k] = f.density[static_cast<size_t>(k)];
    if (opts.record_mass) sol.mass_history.push_back(f.mass);

    auto advance = [&](Solver& slv, double h) {
        Eigen::VectorXd q = slv.solveWithGuess(p, p);
        if (slv.info() != Eigen::Success) throw estimation_error("race stepping solve did not converge");
        double mass_raw = q.sum() * vol;
        double flux = 0;  // signed rate through the absorbing face, from the new state
        for (int i = 0; i < ne; ++i) {
            double c_abs = std::min(eta_c(i), 0.0) - 2.0 * d_pl_diff / dp;
            flux += c_abs * q[idx(i, 0)];
        }
        double resid = std::abs((mass_raw - f.mass) - flux * de * h);
        sol.flux_residual_max = std::max(sol.flux_residual_max, resid);
        for (long k = 0; k < n; ++k)
            if (q[k] < 0) {
                if (q[k] < -1e-9) ++sol.negative_clips;
                q[k] = 0;
            }
        double mass_new = q.sum() * vol;
        if (mass_new > f.mass + 1e-6)
            throw estimation_error("race density mass increased by " +
                                   format_double(mass_new - f.mass));
        p.swap(q);
        f.mass = mass_new;
        f.time += h;
        if (opts.record_mass) sol.mass_history.push_back(f.mass);
    };

    for (long s = 0; s < nfull; ++s) advance(full, opts.dt);
    if (rem > 0) {
        Solver part;
        part.setTolerance(opts.tol);
        Eigen::SparseMatrix<double> m_part = id - rem * A;
        part.compute(m_part);
        if (part.info() != Eigen::Success) throw estimation_error("race stepping matrix factorization failed");
        advance(part, rem);
    }

    for (long k = 0; k < n; ++k) f.density[static_cast<size_t>(k)] = p[k];
    f.time = problem.tau_star;
    sol.pr_overtake = std::clamp(1.0 - f.mass, 0.0, 1.0);
    if (sol.negative_clips > 0)
        std::cerr << "[window] warning: clipped " << sol.negative_clips
                  << " negative density cells\n";
    return sol;
}

double em_simulate(const FpProblem& problem, long paths, double dt, std::uint64_t seed,
                   int workers) {
    if (!(problem.b > 0)) throw spec_error("speed relaxation rate must be positive");
    if (paths < 1) throw spec_error("path count must be positive");
    if (!(dt > 0) || dt > 0.25 / problem.b + 1e-12)
        throw spec_error("time step too coarse for the relaxation rate");

    const double sst = problem.stationary_sd();
    const double s1 = std::sqrt(std::max(0.0, problem.sigma1_sq));
    const double rho = problem.init_rho;
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const long nsteps = std::max<long>(1, static_cast<long>(std::ceil(problem.tau_star / dt - 1e-12)));
    const double last = problem.tau_star - (nsteps - 1) * dt;

    auto run_path = [&](long pidx) -> int {
        Rng rng = substream(seed, streams::em_path, static_cast<uint64_t>(pidx));
        double z1 = rng.normal(), z2 = rng.normal();
        double eta = problem.m + sst * z1;
        double pl = problem.init_delta * (rho * z1 + rho_c * z2);
        while (pl > problem.w_right) pl = 2.0 * problem.w_right - pl;
        if (pl <= problem.w_left) return 1;
        for (long s = 0; s < nsteps; ++s) {
            double h = (s + 1 == nsteps) ? last : dt;
            double g1 = rng.normal(), g2 = rng.normal();
            double step = eta * h + problem.sigma2 * std::sqrt(h) * g2;
            eta += -problem.b * (eta - problem.m) * h + s1 * std::sqrt(h) * g1;
            pl += step;
            while (pl > problem.w_right) pl = 2.0 * problem.w_right - pl;
            if (pl <= problem.w_left) return 1;
        }
        return 0;
    };

    std::int64_t absorbed = 0;
    if (workers > 1) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(workers) reduction(+ : absorbed)
#endif
        for (long pidx = 0; pidx < paths; ++pidx) absorbed += run_path(pidx);
    } else {
        for (long pidx = 0; pidx < paths; ++pidx) absorbed += run_path(pidx);
    }
    return static_cast<double>(absorbed) / static_cast<double>(paths);
}

SwLimitedPrediction predict_sliding_window_limited(const ScalingParams& params, double epsilon,
                                                   double N, int L, const WindowConfig& cfg,
                                                   const FpOptions& opts) {
    if (cfg.W < 1 || cfg.W > L) throw spec_error("window width must lie in [1, L]");
    SwLimitedPrediction out;
    out.w_prime = adjusted_window(params, epsilon, cfg.W, cfg.I_s);
    FpProblem prob = build_problem(params, epsilon, N, L, cfg);
    out.race = fp_solve(prob, opts);
    out.pr_overtake = out.race.pr_overtake;
    double surv = 1.0 - out.pr_overtake;
    if (out.w_prime <= 0.0) {
        std::cerr << "[window] warning: adjusted window reach is zero, "
                     "dropping the terminated-tail factor\n";
        double pu = fer_unlimited_unterminated(params, epsilon, N, L);
        out.fer = 1.0 - surv * (1.0 - pu);
    } else {
        double rest = L - out.w_prime;
        double pu = rest > 1e-12 ? fer_unlimited_unterminated(params, epsilon, N, rest) : 0.0;
        double pt = fer_unlimited_terminated_len(params, epsilon, N, out.w_prime);
        out.fer = 1.0 - surv * (1.0 - pu) * (1.0 - pt);
    }
    out.fer = std::clamp(out.fer, 0.0, 1.0);
    return out;
}

double fer_sliding_window_limited(const ScalingParams& params, double epsilon, double N, int L,
                                  const WindowConfig& cfg) {
    return predict_sliding_window_limited(params, epsilon, N, L, cfg).fer;
}

}  // namespace scl
