#pragma once

#include <cstdint>
#include <vector>

#include "scalelab/decoders.hpp"
#include "scalelab/scaling_params.hpp"

namespace scl {

using WindowConfig = SlidingWindowConfig;

// The race between the decoding wave and the sliding window, in the frame that
// moves with the window: eta is the instantaneous wave speed relative to the
// window (an OU process relaxing toward m at rate b) and P_L the wave position
// ahead of the trailing window edge. The wave is lost when P_L hits w_left
// (window overtakes it, absorbing) and is held at w_right (it cannot outrun
// the data the window exposes, reflecting).
struct FpProblem {
    double m = 0;          // mean relative speed, drift minus window speed
    double b = 0;          // speed relaxation rate
    double sigma1_sq = 0;  // speed noise power
    double sigma2 = 0;     // position noise amplitude
    double w_left = 0;     // absorbing barrier
    double w_right = 0;    // reflecting barrier
    double ell_star = 0;   // iterations before the race starts
    double tau_star = 0;   // race duration in iterations
    double v_window = 0;   // window speed in positions per iteration
    double init_rho = 0.99;
    double init_delta = 0.1;

    double stationary_sd() const;
    void validate() const;
};

// cell-averaged density p(eta, P_L) on a uniform grid; mass = sum * cell area
struct PdfField {
    double eta_lo = 0, eta_hi = 0;
    double pl_lo = 0, pl_hi = 0;
    int n_eta = 0, n_pl = 0;
    std::vector<double> density;
    double time = 0;
    double mass = 0;

    double d_eta() const { return (eta_hi - eta_lo) / n_eta; }
    double d_pl() const { return (pl_hi - pl_lo) / n_pl; }
    double& at(int i, int j) { return density[static_cast<size_t>(i) * n_pl + j]; }
    double at(int i, int j) const { return density[static_cast<size_t>(i) * n_pl + j]; }
};

struct FpOptions {
    double dt = 1.0;
    int n_eta = 200;
    int n_pl_per_w = 20;  // cells per unit barrier separation
    double tol = 1e-10;
    bool record_mass = false;
};

struct FpSolution {
    PdfField field;
    double pr_overtake = 0;
    long negative_clips = 0;       // cells found below -1e-9 and clipped
    double flux_residual_max = 0;  // worst |mass change + dt * absorbed flux| per step
    std::vector<double> mass_history;
};

// effective window reach once ramp-up/ramp-down iterations and the moving
// window are accounted for, clamped to [0, W]
double adjusted_window(const ScalingParams& params, double epsilon, int W, int I_s);

FpProblem build_problem(const ScalingParams& params, double epsilon, double N, int L,
                        const WindowConfig& cfg);

// implicit finite-volume solve of the race density up to tau_star;
// pr_overtake = 1 - surviving mass
FpSolution fp_solve(const FpProblem& problem, const FpOptions& opts = {});

// Euler-Maruyama oracle for the same first-passage problem
double em_simulate(const FpProblem& problem, long paths, double dt, std::uint64_t seed,
                   int workers = 1);

struct SwLimitedPrediction {
    double w_prime = 0;
    double pr_overtake = 0;
    double fer = 0;
    FpSolution race;
};

SwLimitedPrediction predict_sliding_window_limited(const ScalingParams& params, double epsilon,
                                                   double N, int L, const WindowConfig& cfg,
                                                   const FpOptions& opts = {});

double fer_sliding_window_limited(const ScalingParams& params, double epsilon, double N, int L,
                                  const WindowConfig& cfg);

}  // namespace scl
